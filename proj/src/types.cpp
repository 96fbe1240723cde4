#include "nmneval/types.hpp"

#include <algorithm>
#include <cmath>

namespace nmneval {

double iou(const BoundingBox& a, const BoundingBox& b) {
    if (a.image != b.image) return 0.0;
    double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

NumberValue make_number(double mean, double var) {
    if (!std::isfinite(mean) || !std::isfinite(var))
        throw ValidationError("number value has non-finite parameters");
    if (var < 0.0) throw ValidationError("number value has negative variance");
    return NumberValue{mean, var};
}

void ValueDist::validate() const {
    if (support.size() != probs.size())
        throw ValidationError("value distribution support/probability length mismatch");
    if (support.empty()) throw ValidationError("value distribution is empty");
    double total = stable_sum(probs);
    if (std::fabs(total - 1.0) > 1e-6)
        throw ValidationError("value distribution probabilities do not sum to 1");
    for (double p : probs)
        if (!(p >= 0.0)) throw ValidationError("value distribution has negative probability");
    for (std::size_t i = 0; i < support.size(); ++i)
        for (std::size_t j = i + 1; j < support.size(); ++j)
            if (support[i] == support[j])
                throw ValidationError("value distribution support entries must be distinct");
}

double stable_sum(const std::vector<double>& xs) {
    double sum = 0.0, comp = 0.0;
    for (double x : xs) {
        double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    return sum + comp;
}

}  // namespace nmneval
