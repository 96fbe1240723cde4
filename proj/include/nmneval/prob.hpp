#pragma once

#include "nmneval/types.hpp"

namespace nmneval {

enum class CompareKind { Equal, Less, Greater, LessEqual, GreaterEqual };
enum class BoolKind { And, Or };
enum class GaussianArithKind { Sum, Difference, Division };
enum class ValueDistArithKind { Addition, Subtraction };

/// Normal CDF evaluated at x for Normal(mean, var). var must be > 0.
double normal_cdf(double x, double mean, double var);

/// Convert a Gaussian number to a categorical over {0..K}:
///   Pr[X=0] = CDF(0.5), Pr[X=k] = CDF(k+0.5) - CDF(k-0.5) for 0 < k < K,
///   Pr[X=K] = 1 - CDF(K-0.5).
/// A zero-variance number becomes an exact point mass at
/// clamp(round(mean), 0, K).
CategoricalCount discretize(const NumberValue& n, int max_count);

/// Probability of the ordering relation between two independent numbers,
/// computed over their shared {0..K} discretization.
TruthProb compare(CompareKind kind, const NumberValue& a, const NumberValue& b, int max_count);

/// and(a,b) = a*b;  or(a,b) = a + b - a*b.
TruthProb bool_combine(BoolKind kind, TruthProb a, TruthProb b);

/// sum / difference: means add/subtract, variances add.
/// division: first-order approximation
///   mean = a_m/b_m + b_v*a_m/b_m^3,
///   var  = (a_m^2/b_m^2) * (a_v/a_m^2 + b_v/b_m^2);
/// both operand means must be nonzero.
NumberValue gaussian_arith(GaussianArithKind kind, const NumberValue& a, const NumberValue& b);

/// Exact convolution of two finite-support distributions:
/// Pr[Z=z] = sum over {x op y = z} of Pr[X=x]*Pr[Y=y].
ValueDist value_dist_arith(ValueDistArithKind kind, const ValueDist& x, const ValueDist& y);

CompareKind compare_kind_from_name(const std::string& name);

}  // namespace nmneval
