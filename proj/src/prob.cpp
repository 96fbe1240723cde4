#include "nmneval/prob.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nmneval {

double normal_cdf(double x, double mean, double var) {
    return 0.5 * (1.0 + std::erf((x - mean) / std::sqrt(2.0 * var)));
}

CategoricalCount discretize(const NumberValue& n, int max_count) {
    if (max_count < 1) throw ValidationError("max count must be at least 1");
    const int k_max = max_count;
    CategoricalCount out;
    out.probs.assign(static_cast<std::size_t>(k_max) + 1, 0.0);

    if (n.var == 0.0) {
        long k = std::llround(n.mean);
        k = std::clamp(k, 0L, static_cast<long>(k_max));
        out.probs[static_cast<std::size_t>(k)] = 1.0;
        return out;
    }

    // Telescoping CDF differences: the bin masses sum to exactly 1 up to
    // floating rounding because interior terms cancel.
    double prev = normal_cdf(0.5, n.mean, n.var);
    out.probs[0] = prev;
    for (int k = 1; k < k_max; ++k) {
        double cur = normal_cdf(k + 0.5, n.mean, n.var);
        out.probs[static_cast<std::size_t>(k)] = cur - prev;
        prev = cur;
    }
    out.probs[static_cast<std::size_t>(k_max)] = 1.0 - prev;
    return out;
}

TruthProb compare(CompareKind kind, const NumberValue& a, const NumberValue& b, int max_count) {
    CategoricalCount ca = discretize(a, max_count);
    CategoricalCount cb = discretize(b, max_count);
    const std::size_t n = ca.probs.size();

    // Pr[b < k] and Pr[b > k] by prefix/suffix accumulation.
    std::vector<double> below(n, 0.0), above(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) below[k] = below[k - 1] + cb.probs[k - 1];
    for (std::size_t k = n - 1; k-- > 0;) above[k] = above[k + 1] + cb.probs[k + 1];

    double p_equal = 0.0, p_less = 0.0, p_greater = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        p_equal += ca.probs[k] * cb.probs[k];
        p_less += ca.probs[k] * above[k];
        p_greater += ca.probs[k] * below[k];
    }

    double result = 0.0;
    switch (kind) {
        case CompareKind::Equal: result = p_equal; break;
        case CompareKind::Less: result = p_less; break;
        case CompareKind::Greater: result = p_greater; break;
        case CompareKind::LessEqual: result = p_less + p_equal; break;
        case CompareKind::GreaterEqual: result = p_greater + p_equal; break;
    }
    return TruthProb(std::clamp(result, 0.0, 1.0));
}

TruthProb bool_combine(BoolKind kind, TruthProb a, TruthProb b) {
    double v = kind == BoolKind::And ? a.value * b.value
                                     : a.value + b.value - a.value * b.value;
    return TruthProb(std::clamp(v, 0.0, 1.0));
}

NumberValue gaussian_arith(GaussianArithKind kind, const NumberValue& a, const NumberValue& b) {
    switch (kind) {
        case GaussianArithKind::Sum:
            return NumberValue{a.mean + b.mean, a.var + b.var};
        case GaussianArithKind::Difference:
            return NumberValue{a.mean - b.mean, a.var + b.var};
        case GaussianArithKind::Division: {
            if (a.mean == 0.0 || b.mean == 0.0)
                throw ValidationError("division requires operands with nonzero mean");
            double mean = a.mean / b.mean + b.var * a.mean / (b.mean * b.mean * b.mean);
            double var = (a.mean * a.mean) / (b.mean * b.mean) *
                         (a.var / (a.mean * a.mean) + b.var / (b.mean * b.mean));
            return NumberValue{mean, var};
        }
    }
    throw std::logic_error("unreachable gaussian_arith kind");
}

ValueDist value_dist_arith(ValueDistArithKind kind, const ValueDist& x, const ValueDist& y) {
    x.validate();
    y.validate();
    std::map<double, double> acc;
    for (std::size_t i = 0; i < x.support.size(); ++i) {
        for (std::size_t j = 0; j < y.support.size(); ++j) {
            double z = kind == ValueDistArithKind::Addition ? x.support[i] + y.support[j]
                                                            : x.support[i] - y.support[j];
            acc[z] += x.probs[i] * y.probs[j];
        }
    }
    ValueDist out;
    out.support.reserve(acc.size());
    out.probs.reserve(acc.size());
    for (const auto& [z, p] : acc) {
        out.support.push_back(z);
        out.probs.push_back(p);
    }
    return out;
}

CompareKind compare_kind_from_name(const std::string& name) {
    if (name == "equal") return CompareKind::Equal;
    if (name == "less") return CompareKind::Less;
    if (name == "greater") return CompareKind::Greater;
    if (name == "less-equal") return CompareKind::LessEqual;
    if (name == "greater-equal") return CompareKind::GreaterEqual;
    throw ValidationError("unknown comparison kind: " + name);
}

}  // namespace nmneval
