#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "nmneval/error.hpp"

namespace nmneval {

using NodeId = std::size_t;

enum class ImageSide { Left, Right };

inline const char* to_string(ImageSide s) { return s == ImageSide::Left ? "left" : "right"; }

/// Axis-aligned box in pixel coordinates, tagged with the image it lives in.
struct BoundingBox {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    ImageSide image = ImageSide::Left;

    bool operator==(const BoundingBox&) const = default;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    void validate() const {
        if (!(std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2)))
            throw ValidationError("bounding box has non-finite coordinates");
        if (x1 < 0 || y1 < 0)
            throw ValidationError("bounding box has negative coordinates");
        if (!(x1 < x2 && y1 < y2))
            throw ValidationError("bounding box is degenerate (requires x1 < x2 and y1 < y2)");
    }
};

/// Intersection-over-union. Boxes in different images never overlap.
double iou(const BoundingBox& a, const BoundingBox& b);

/// Two-image scene: a fixed, ordered list of box proposals. All attention
/// vectors index into this order.
struct Scene {
    std::string id;
    std::vector<BoundingBox> proposals;

    std::size_t size() const { return proposals.size(); }
};

/// Per-proposal membership probabilities, aligned with Scene::proposals.
struct BoxAttention {
    std::vector<double> probs;

    BoxAttention() = default;
    explicit BoxAttention(std::vector<double> p) : probs(std::move(p)) {}

    bool operator==(const BoxAttention&) const = default;

    std::size_t size() const { return probs.size(); }

    void validate(std::size_t expected_len) const {
        if (probs.size() != expected_len)
            throw ValidationError("box attention length " + std::to_string(probs.size()) +
                                  " does not match proposal count " + std::to_string(expected_len));
        for (double p : probs)
            if (!(p >= 0.0 && p <= 1.0))
                throw ValidationError("box attention entry outside [0,1]");
    }
};

/// Probability that a Boolean denotation is true.
struct TruthProb {
    double value = 0.0;

    bool operator==(const TruthProb&) const = default;

    TruthProb() = default;
    explicit TruthProb(double v) : value(v) {
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("truth probability outside [0,1]");
    }
};

/// Gaussian-parameterized count/number value.
struct NumberValue {
    double mean = 0.0;
    double var = 0.0;

    bool operator==(const NumberValue&) const = default;
};

NumberValue make_number(double mean, double var);

/// Categorical distribution over counts {0..K}.
struct CategoricalCount {
    std::vector<double> probs;  // size K+1

    int max_count() const { return static_cast<int>(probs.size()) - 1; }
};

/// Distribution over an explicit support of real values (numbers mentioned
/// in a passage).
struct ValueDist {
    std::vector<double> support;
    std::vector<double> probs;

    void validate() const;
};

/// Distribution over utterance/passage token positions.
struct TokenDist {
    std::vector<double> probs;
};

/// A module's runtime value.
using Value = std::variant<TruthProb, NumberValue, BoxAttention>;

/// Compensated (Neumaier) summation; keeps integer-valued sums of short
/// probability vectors exact.
double stable_sum(const std::vector<double>& xs);

}  // namespace nmneval
