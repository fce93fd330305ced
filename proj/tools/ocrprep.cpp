#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ocrprep/checkpoint.hpp"
#include "ocrprep/configfile.hpp"
#include "ocrprep/datagen.hpp"
#include "ocrprep/evalreport.hpp"
#include "ocrprep/trainers.hpp"

namespace fs = std::filesystem;
using namespace ocrprep;

namespace {

// -------- shared plumbing ----------------------------------------------------

struct CommonOpts {
    std::string config_path;
    std::string engine = "a";
    std::string ocr_command;
    long ocr_timeout_ms = 10000;
};

void add_common(CLI::App* cmd, CommonOpts& c, bool with_engine = true) {
    cmd->add_option("--config", c.config_path, "config file (key = value, [section] headers)");
    if (with_engine) {
        cmd->add_option("--engine", c.engine, "recognizer: a, b, or external")
            ->check(CLI::IsMember({"a", "b", "external"}));
        cmd->add_option("--ocr-command", c.ocr_command,
                        "external OCR command template, {image} placeholder "
                        "(or env OCRPREP_OCR_COMMAND)");
        cmd->add_option("--ocr-timeout-ms", c.ocr_timeout_ms, "external OCR timeout");
    }
}

evalcli::ConfigFile load_config(const CommonOpts& c) {
    if (c.config_path.empty()) return evalcli::ConfigFile::parse_string("", "<none>");
    return evalcli::ConfigFile::parse_file(c.config_path);
}

std::shared_ptr<blackbox::Recognizer> make_recognizer(const CommonOpts& c) {
    if (c.engine == "a") return blackbox::TemplateRecognizer::engine_a();
    if (c.engine == "b") return blackbox::TemplateRecognizer::engine_b();
    std::string cmd = c.ocr_command;
    if (cmd.empty())
        if (const char* env = std::getenv("OCRPREP_OCR_COMMAND")) cmd = env;
    if (cmd.empty())
        throw std::runtime_error(
            "--engine external needs --ocr-command or OCRPREP_OCR_COMMAND");
    return std::make_shared<blackbox::ExternalRecognizer>(
        cmd, std::chrono::milliseconds(c.ocr_timeout_ms), "external");
}

std::vector<data::Sample> load_split(const std::string& data_dir, const std::string& split) {
    auto vocab = losses::CharVocab::default_vocab();
    return data::load_dataset((fs::path(data_dir) / (split + ".tsv")).string(), &vocab);
}

std::string dataset_id(const std::string& data_dir, const std::string& split) {
    return data_dir + ":" + split;
}

void write_run_manifest(const std::string& path, const std::string& subcommand,
                        const std::vector<std::pair<std::string, std::string>>& kv) {
    evalcli::RunManifest m;
    m.set("subcommand", subcommand);
    m.set("code_revision", evalcli::code_revision());
    for (const auto& [k, v] : kv) m.set(k, v);
    m.write(path);
}

std::string hash_or_none(const std::string& path) {
    return path.empty() ? "none" : diffkernel::file_hash(path);
}

// -------- subcommand bodies --------------------------------------------------

int cmd_generate_data(const CommonOpts& common, const std::string& out_dir, std::uint64_t seed,
                      int n_train, int n_val, int n_test, std::string degradation,
                      const std::string& manifest_out) {
    auto cfg = load_config(common);
    if (degradation.empty())
        degradation = cfg.get_string("data.degradation", data::DegradationConfig::calibrated().to_string());
    auto deg = data::DegradationConfig::parse(degradation);
    deg.validate();
    data::SplitCounts counts;
    counts.train = n_train > 0 ? n_train : static_cast<int>(cfg.get_int("data.train", 5000));
    counts.val = n_val > 0 ? n_val : static_cast<int>(cfg.get_int("data.val", 500));
    counts.test = n_test > 0 ? n_test : static_cast<int>(cfg.get_int("data.test", 500));
    auto vocab = losses::CharVocab::default_vocab();
    data::generate_dataset(vocab, counts, deg, seed, out_dir);
    if (!manifest_out.empty())
        write_run_manifest(manifest_out, "generate-data",
                           {{"out_dir", out_dir},
                            {"seed", std::to_string(seed)},
                            {"train", std::to_string(counts.train)},
                            {"val", std::to_string(counts.val)},
                            {"test", std::to_string(counts.test)},
                            {"degradation", deg.to_string()}});
    std::cout << "wrote " << counts.train << "/" << counts.val << "/" << counts.test
              << " samples under " << out_dir << "\n";
    return 0;
}

int cmd_pretrain_approx(const CommonOpts& common, const std::string& data_dir, int epochs,
                        double lr, std::uint64_t seed, const std::string& out_ckpt,
                        const std::string& log_path, const std::string& manifest_out) {
    auto cfg = load_config(common);
    if (epochs < 0) epochs = static_cast<int>(cfg.get_int("pretrain.epochs", 50));
    if (lr <= 0) lr = cfg.get_double("pretrain.lr", 1e-4);
    auto train = load_split(data_dir, "train");
    auto val = load_split(data_dir, "val");
    networks::ApproximatorNet net(losses::CharVocab::default_vocab(), seed);
    auto log = trainers::pretrain_approximator(train, &val, net, epochs,
                                               static_cast<float>(lr), seed);
    net.save(out_ckpt);
    if (!log_path.empty()) log.write(log_path);
    if (!manifest_out.empty())
        write_run_manifest(manifest_out, "pretrain-approx",
                           {{"data_dir", data_dir},
                            {"epochs", std::to_string(epochs)},
                            {"lr", std::to_string(lr)},
                            {"seed", std::to_string(seed)},
                            {"checkpoint", out_ckpt},
                            {"checkpoint_hash", hash_or_none(out_ckpt)}});
    std::cout << "approximator saved to " << out_ckpt << "\n";
    if (!log.records.empty()) {
        const auto& last = log.records.back();
        std::cout << "final " << last.split << " record: loss " << last.loss_total
                  << " acc " << last.accuracy << "\n";
    }
    return 0;
}

int cmd_pretrain_identity(const CommonOpts& common, const std::string& data_dir, int epochs,
                          double lr, std::uint64_t seed, const std::string& out_ckpt,
                          const std::string& log_path, const std::string& manifest_out) {
    auto cfg = load_config(common);
    if (epochs < 0) epochs = static_cast<int>(cfg.get_int("pretrain.identity_epochs", 5));
    if (lr <= 0) lr = cfg.get_double("pretrain.identity_lr", 1e-4);
    auto train = load_split(data_dir, "train");
    networks::PreprocessorNet net(seed);
    auto log = trainers::pretrain_preprocessor_identity(train, net, epochs,
                                                        static_cast<float>(lr), seed);
    net.save(out_ckpt);
    if (!log_path.empty()) log.write(log_path);
    if (!manifest_out.empty())
        write_run_manifest(manifest_out, "pretrain-identity",
                           {{"data_dir", data_dir},
                            {"epochs", std::to_string(epochs)},
                            {"lr", std::to_string(lr)},
                            {"seed", std::to_string(seed)},
                            {"checkpoint", out_ckpt},
                            {"checkpoint_hash", hash_or_none(out_ckpt)}});
    std::cout << "preprocessor saved to " << out_ckpt << "\n";
    return 0;
}

int cmd_train_nn(const CommonOpts& common, const std::string& data_dir,
                 const std::string& approx_ckpt, const std::string& pre_ckpt, int epochs,
                 std::uint64_t seed, const std::string& out_pre, const std::string& out_approx,
                 const std::string& log_path, const std::string& manifest_out) {
    auto cfg = load_config(common);
    trainers::NNTrainConfig tc;
    tc.jitter_samples = static_cast<int>(cfg.get_int("train.jitter_samples", tc.jitter_samples));
    tc.batch_size = static_cast<int>(cfg.get_int("train.batch_size", tc.batch_size));
    tc.replay_samples = static_cast<int>(cfg.get_int("train.replay_samples", tc.replay_samples));
    tc.replay_capacity = static_cast<int>(cfg.get_int("train.replay_capacity", tc.replay_capacity));
    tc.sigma_set = cfg.get_floats("train.sigma_set", tc.sigma_set);
    tc.lr_pre = static_cast<float>(cfg.get_double("train.lr_pre", tc.lr_pre));
    tc.lr_approx = static_cast<float>(cfg.get_double("train.lr_approx", tc.lr_approx));
    tc.beta = static_cast<float>(cfg.get_double("train.beta", tc.beta));
    tc.epochs = epochs >= 0 ? epochs : static_cast<int>(cfg.get_int("train.epochs", tc.epochs));
    tc.val_every = static_cast<int>(cfg.get_int("train.val_every", tc.val_every));
    tc.keep_best = cfg.get_bool("train.keep_best", tc.keep_best);
    tc.progress = cfg.get_bool("train.progress", tc.progress);
    tc.seed = seed;
    tc.validate();

    auto ocr = make_recognizer(common);
    auto train = load_split(data_dir, "train");
    auto val = load_split(data_dir, "val");
    networks::PreprocessorNet pre(seed);
    if (!pre_ckpt.empty()) pre.load(pre_ckpt);
    networks::ApproximatorNet approx(losses::CharVocab::default_vocab(), seed + 1);
    approx.load(approx_ckpt);

    auto log = trainers::train_nn_approx(train, &val, tc, *ocr, pre, approx);
    pre.save(out_pre);
    if (!out_approx.empty()) approx.save(out_approx);
    if (!log_path.empty()) log.write(log_path);
    if (!manifest_out.empty())
        write_run_manifest(manifest_out, "train-nn",
                           {{"data_dir", data_dir},
                            {"engine", ocr->id()},
                            {"epochs", std::to_string(tc.epochs)},
                            {"jitter_samples", std::to_string(tc.jitter_samples)},
                            {"lr_pre", std::to_string(tc.lr_pre)},
                            {"lr_approx", std::to_string(tc.lr_approx)},
                            {"beta", std::to_string(tc.beta)},
                            {"seed", std::to_string(seed)},
                            {"approx_in", approx_ckpt},
                            {"approx_in_hash", hash_or_none(approx_ckpt)},
                            {"pre_in", pre_ckpt.empty() ? "none" : pre_ckpt},
                            {"pre_in_hash", hash_or_none(pre_ckpt)},
                            {"pre_out", out_pre},
                            {"pre_out_hash", hash_or_none(out_pre)}});
    std::cout << "preprocessor saved to " << out_pre << " (skipped samples: "
              << log.skipped_samples << ")\n";
    return 0;
}

int cmd_train_sfe(const CommonOpts& common, const std::string& data_dir,
                  const std::string& pre_ckpt, int epochs, std::uint64_t seed,
                  const std::string& out_pre, const std::string& log_path,
                  const std::string& manifest_out) {
    auto cfg = load_config(common);
    trainers::SFETrainConfig tc;
    tc.n = static_cast<int>(cfg.get_int("sfe.n", tc.n));
    tc.sigma = static_cast<float>(cfg.get_double("sfe.sigma", tc.sigma));
    tc.lr = static_cast<float>(cfg.get_double("sfe.lr", tc.lr));
    tc.beta = static_cast<float>(cfg.get_double("sfe.beta", tc.beta));
    tc.epochs = epochs >= 0 ? epochs : static_cast<int>(cfg.get_int("sfe.epochs", tc.epochs));
    tc.val_every = static_cast<int>(cfg.get_int("sfe.val_every", tc.val_every));
    tc.keep_best = cfg.get_bool("sfe.keep_best", tc.keep_best);
    tc.progress = cfg.get_bool("sfe.progress", tc.progress);
    tc.seed = seed;
    tc.validate();

    auto ocr = make_recognizer(common);
    auto train = load_split(data_dir, "train");
    auto val = load_split(data_dir, "val");
    networks::PreprocessorNet pre(seed);
    if (!pre_ckpt.empty()) pre.load(pre_ckpt);

    auto log = trainers::train_sfe(train, &val, tc, *ocr, pre);
    pre.save(out_pre);
    if (!log_path.empty()) log.write(log_path);
    if (!manifest_out.empty())
        write_run_manifest(manifest_out, "train-sfe",
                           {{"data_dir", data_dir},
                            {"engine", ocr->id()},
                            {"epochs", std::to_string(tc.epochs)},
                            {"n", std::to_string(tc.n)},
                            {"sigma", std::to_string(tc.sigma)},
                            {"lr", std::to_string(tc.lr)},
                            {"beta", std::to_string(tc.beta)},
                            {"seed", std::to_string(seed)},
                            {"pre_in", pre_ckpt.empty() ? "none" : pre_ckpt},
                            {"pre_in_hash", hash_or_none(pre_ckpt)},
                            {"pre_out", out_pre},
                            {"pre_out_hash", hash_or_none(out_pre)}});
    std::cout << "preprocessor saved to " << out_pre << " (skipped samples: "
              << log.skipped_samples << ")\n";
    return 0;
}

int run_evaluate(const CommonOpts& common, const std::string& data_dir, const std::string& split,
                 const std::string& pre_ckpt, const std::string& report_out,
                 const std::string& manifest_out, const char* subcommand) {
    auto ocr = make_recognizer(common);
    auto samples = load_split(data_dir, split);
    std::unique_ptr<networks::PreprocessorNet> pre;
    std::string pre_id = "none";
    if (!pre_ckpt.empty()) {
        pre = std::make_unique<networks::PreprocessorNet>(0);
        pre->load(pre_ckpt);
        pre_id = fs::path(pre_ckpt).filename().string();
    }
    auto rep = evalcli::evaluate(*ocr, pre.get(), samples, dataset_id(data_dir, split), pre_id);
    std::cout << evalcli::format_report(rep);
    if (!report_out.empty()) evalcli::write_report_tsv(report_out, rep);
    if (!manifest_out.empty())
        write_run_manifest(manifest_out, subcommand,
                           {{"data_dir", data_dir},
                            {"split", split},
                            {"engine", ocr->id()},
                            {"pre", pre_ckpt.empty() ? "none" : pre_ckpt},
                            {"pre_hash", hash_or_none(pre_ckpt)},
                            {"accuracy", std::to_string(rep.word_accuracy)},
                            {"cer", std::to_string(rep.cer)}});
    return 0;
}

int cmd_evaluate_from_manifest(const CommonOpts& common, const std::string& manifest_path) {
    auto m = evalcli::RunManifest::read(manifest_path);
    auto need = [&](const char* key) -> std::string {
        const std::string* v = m.find(key);
        if (!v) throw std::runtime_error("run manifest missing key: " + std::string(key));
        return *v;
    };
    CommonOpts c = common;
    std::string engine = need("engine");
    if (engine == "template-a") c.engine = "a";
    else if (engine == "template-b") c.engine = "b";
    else c.engine = "external";
    std::string pre = need("pre");
    if (pre == "none") pre.clear();
    return run_evaluate(c, need("data_dir"), need("split"), pre, "", "", "evaluate");
}

int cmd_compare(const std::string& baseline_tsv, const std::string& treated_tsv) {
    auto base = evalcli::read_report_tsv(baseline_tsv);
    auto treat = evalcli::read_report_tsv(treated_tsv);
    std::cout << evalcli::format_comparison(evalcli::compare(base, treat));
    return 0;
}

int cmd_export_images(const std::string& data_dir, const std::string& split,
                      const std::string& pre_ckpt, const std::string& out_dir, int count) {
    auto samples = load_split(data_dir, split);
    networks::PreprocessorNet pre(0);
    pre.load(pre_ckpt);
    evalcli::export_images(pre, samples, out_dir, count);
    std::cout << "wrote " << std::min<std::size_t>(count, samples.size()) << " pairs to "
              << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trainable OCR preprocessing toolkit"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "render a synthetic degraded dataset");
    CommonOpts gen_c;
    std::string gen_out, gen_deg, gen_manifest;
    std::uint64_t gen_seed = 0;
    int gen_train = 0, gen_val = 0, gen_test = 0;
    add_common(gen, gen_c, false);
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--train", gen_train, "train sample count");
    gen->add_option("--val", gen_val, "val sample count");
    gen->add_option("--test", gen_test, "test sample count");
    gen->add_option("--degradation", gen_deg, "degradation descriptor string");
    gen->add_option("--run-manifest", gen_manifest, "run manifest output path");

    // pretrain-approx
    auto* pta = app.add_subcommand("pretrain-approx", "CTC-pretrain the approximator");
    CommonOpts pta_c;
    std::string pta_data, pta_out, pta_log, pta_manifest;
    int pta_epochs = -1;
    double pta_lr = 0;
    std::uint64_t pta_seed = 0;
    add_common(pta, pta_c, false);
    pta->add_option("--data", pta_data, "dataset directory")->required();
    pta->add_option("--epochs", pta_epochs, "epochs");
    pta->add_option("--lr", pta_lr, "learning rate");
    pta->add_option("--seed", pta_seed, "seed");
    pta->add_option("--out", pta_out, "checkpoint output")->required();
    pta->add_option("--log", pta_log, "metric log output");
    pta->add_option("--run-manifest", pta_manifest, "run manifest output path");

    // pretrain-identity
    auto* pti = app.add_subcommand("pretrain-identity", "identity-pretrain the preprocessor");
    CommonOpts pti_c;
    std::string pti_data, pti_out, pti_log, pti_manifest;
    int pti_epochs = -1;
    double pti_lr = 0;
    std::uint64_t pti_seed = 0;
    add_common(pti, pti_c, false);
    pti->add_option("--data", pti_data, "dataset directory")->required();
    pti->add_option("--epochs", pti_epochs, "epochs");
    pti->add_option("--lr", pti_lr, "learning rate");
    pti->add_option("--seed", pti_seed, "seed");
    pti->add_option("--out", pti_out, "checkpoint output")->required();
    pti->add_option("--log", pti_log, "metric log output");
    pti->add_option("--run-manifest", pti_manifest, "run manifest output path");

    // train-nn
    auto* tnn = app.add_subcommand("train-nn", "surrogate-based alternating training");
    CommonOpts tnn_c;
    std::string tnn_data, tnn_approx, tnn_pre, tnn_out_pre, tnn_out_approx, tnn_log, tnn_manifest;
    int tnn_epochs = -1;
    std::uint64_t tnn_seed = 0;
    add_common(tnn, tnn_c);
    tnn->add_option("--data", tnn_data, "dataset directory")->required();
    tnn->add_option("--approx", tnn_approx, "pretrained approximator checkpoint")->required();
    tnn->add_option("--pre", tnn_pre, "initial preprocessor checkpoint (optional)");
    tnn->add_option("--epochs", tnn_epochs, "epochs");
    tnn->add_option("--seed", tnn_seed, "seed");
    tnn->add_option("--out-pre", tnn_out_pre, "preprocessor checkpoint output")->required();
    tnn->add_option("--out-approx", tnn_out_approx, "approximator checkpoint output");
    tnn->add_option("--log", tnn_log, "metric log output");
    tnn->add_option("--run-manifest", tnn_manifest, "run manifest output path");

    // train-sfe
    auto* tsf = app.add_subcommand("train-sfe", "mirrored-sampling score-function training");
    CommonOpts tsf_c;
    std::string tsf_data, tsf_pre, tsf_out, tsf_log, tsf_manifest;
    int tsf_epochs = -1;
    std::uint64_t tsf_seed = 0;
    add_common(tsf, tsf_c);
    tsf->add_option("--data", tsf_data, "dataset directory")->required();
    tsf->add_option("--pre", tsf_pre, "initial preprocessor checkpoint (optional)");
    tsf->add_option("--epochs", tsf_epochs, "epochs");
    tsf->add_option("--seed", tsf_seed, "seed");
    tsf->add_option("--out-pre", tsf_out, "preprocessor checkpoint output")->required();
    tsf->add_option("--log", tsf_log, "metric log output");
    tsf->add_option("--run-manifest", tsf_manifest, "run manifest output path");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "recognizer metrics over a dataset split");
    CommonOpts ev_c;
    std::string ev_data, ev_split = "test", ev_pre, ev_report, ev_manifest, ev_from;
    add_common(ev, ev_c);
    ev->add_option("--data", ev_data, "dataset directory");
    ev->add_option("--split", ev_split, "split name");
    ev->add_option("--pre", ev_pre, "preprocessor checkpoint (omit for baseline)");
    ev->add_option("--report", ev_report, "TSV report output");
    ev->add_option("--run-manifest", ev_manifest, "run manifest output path");
    ev->add_option("--from-manifest", ev_from, "re-run an earlier evaluate from its manifest");

    // compare
    auto* cp = app.add_subcommand("compare", "paired report from two evaluate TSVs");
    std::string cp_base, cp_treat;
    cp->add_option("--baseline", cp_base, "baseline report TSV")->required();
    cp->add_option("--treated", cp_treat, "treated report TSV")->required();

    // cross-eval
    auto* ce = app.add_subcommand("cross-eval",
                                  "evaluate a preprocessor under a different engine");
    CommonOpts ce_c;
    std::string ce_data, ce_split = "test", ce_pre, ce_report, ce_manifest;
    add_common(ce, ce_c);
    ce->add_option("--data", ce_data, "dataset directory")->required();
    ce->add_option("--split", ce_split, "split name");
    ce->add_option("--pre", ce_pre, "preprocessor checkpoint")->required();
    ce->add_option("--report", ce_report, "TSV report output");
    ce->add_option("--run-manifest", ce_manifest, "run manifest output path");

    // export-images
    auto* ex = app.add_subcommand("export-images", "side-by-side original/processed PNG pairs");
    std::string ex_data, ex_split = "test", ex_pre, ex_out;
    int ex_count = 16;
    ex->add_option("--data", ex_data, "dataset directory")->required();
    ex->add_option("--split", ex_split, "split name");
    ex->add_option("--pre", ex_pre, "preprocessor checkpoint")->required();
    ex->add_option("--out", ex_out, "output directory")->required();
    ex->add_option("--count", ex_count, "number of pairs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_generate_data(gen_c, gen_out, gen_seed, gen_train, gen_val, gen_test,
                                     gen_deg, gen_manifest);
        if (pta->parsed())
            return cmd_pretrain_approx(pta_c, pta_data, pta_epochs, pta_lr, pta_seed, pta_out,
                                       pta_log, pta_manifest);
        if (pti->parsed())
            return cmd_pretrain_identity(pti_c, pti_data, pti_epochs, pti_lr, pti_seed, pti_out,
                                         pti_log, pti_manifest);
        if (tnn->parsed())
            return cmd_train_nn(tnn_c, tnn_data, tnn_approx, tnn_pre, tnn_epochs, tnn_seed,
                                tnn_out_pre, tnn_out_approx, tnn_log, tnn_manifest);
        if (tsf->parsed())
            return cmd_train_sfe(tsf_c, tsf_data, tsf_pre, tsf_epochs, tsf_seed, tsf_out, tsf_log,
                                 tsf_manifest);
        if (ev->parsed()) {
            if (!ev_from.empty()) return cmd_evaluate_from_manifest(ev_c, ev_from);
            if (ev_data.empty()) throw std::runtime_error("evaluate needs --data or --from-manifest");
            return run_evaluate(ev_c, ev_data, ev_split, ev_pre, ev_report, ev_manifest,
                                "evaluate");
        }
        if (cp->parsed()) return cmd_compare(cp_base, cp_treat);
        if (ce->parsed())
            return run_evaluate(ce_c, ce_data, ce_split, ce_pre, ce_report, ce_manifest,
                                "cross-eval");
        if (ex->parsed()) return cmd_export_images(ex_data, ex_split, ex_pre, ex_out, ex_count);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    std::cerr << "error: no subcommand\n";
    return 2;
}
