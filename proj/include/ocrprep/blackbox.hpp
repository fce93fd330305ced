#pragma once

// Unknown-box recognizer contract: image in, text out, no gradients of any
// kind. Implementations never touch an autodiff tape.

#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>

#include "ocrprep/glyphs.hpp"
#include "ocrprep/image.hpp"

namespace ocrprep::blackbox {

// Distinct from "empty text": something went wrong producing a result.
struct RecognitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RecognizerCapabilities {
    bool concurrent_calls_safe = false;
    int max_width = 0;   // 0 = unbounded
    int max_height = 0;
    bool deterministic = false;
};

class Recognizer {
public:
    virtual ~Recognizer() = default;
    virtual std::string recognize(const Image& image) const = 0;
    virtual RecognizerCapabilities capabilities() const = 0;
    virtual std::string id() const = 0;
};

// Deterministic non-differentiable matcher: binarize, segment on blank-column
// runs, pick the max normalized cross-correlation template per segment, emit
// the character when the score clears the threshold.
class TemplateRecognizer : public Recognizer {
public:
    TemplateRecognizer(GlyphAtlas atlas, float binarize_threshold, float match_threshold,
                       std::string id, int min_column_ink = 2);

    static std::shared_ptr<TemplateRecognizer> engine_a();  // thresholds 0.5 / 0.6
    static std::shared_ptr<TemplateRecognizer> engine_b();  // bold atlas, 0.35 / 0.25

    std::string recognize(const Image& image) const override;
    RecognizerCapabilities capabilities() const override;
    std::string id() const override { return id_; }

    float match_threshold() const { return tau_; }

private:
    GlyphAtlas atlas_;
    float binarize_;
    float tau_;
    std::string id_;
    int min_column_ink_;  // columns with fewer ink pixels count as blank
};

// Runs `command` with `{image}` replaced by a temp PNG path; reads UTF-8 text
// from stdout. Nonzero exit, timeout or undecodable output raise
// RecognitionError.
class ExternalRecognizer : public Recognizer {
public:
    ExternalRecognizer(std::string command, std::chrono::milliseconds timeout,
                       std::string id = "external");

    std::string recognize(const Image& image) const override;
    RecognizerCapabilities capabilities() const override;
    std::string id() const override { return id_; }

private:
    std::string command_;
    std::chrono::milliseconds timeout_;
    std::string id_;
};

}  // namespace ocrprep::blackbox
