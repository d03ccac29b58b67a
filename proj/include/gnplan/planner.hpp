#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gnplan/activation.hpp"
#include "gnplan/errors.hpp"

namespace gnplan {

/// One weight layer of an architecture, described by its widths. gain_ratio
/// is the forward/backward activation gain ratio used by the generalized
/// ideal-group formula; 1.0 is exact for the ReLU family.
struct LayerSpec {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    ActivationKind activation = ActivationKind::relu();
    double gain_ratio = 1.0;
};

enum class GroupCase { LowerBound, UpperBound, DivisorSearch };

inline std::string to_string(GroupCase c) {
    switch (c) {
        case GroupCase::LowerBound: return "case1_lower_bound";
        case GroupCase::UpperBound: return "case2_upper_bound";
        case GroupCase::DivisorSearch: return "case3_divisor_search";
    }
    return "?";
}

/// Gradient-variance ratio across one unit block: K(g) = (n_out + 4g)/n_in.
/// K == 1 is the isometry condition; K increases linearly in g.
inline double k_ratio(std::size_t n_in, std::size_t n_out, double g) {
    return (static_cast<double>(n_out) + 4.0 * g) / static_cast<double>(n_in);
}

/// Real-valued group count solving K(g) = 1: (n_in - n_out)/4. Unclamped and
/// possibly non-positive or larger than n_out.
inline double ideal_groups(std::size_t n_in, std::size_t n_out) {
    return (static_cast<double>(n_in) - static_cast<double>(n_out)) / 4.0;
}

/// Generalization for activations whose forward/backward gains differ:
/// ((F/B) * n_in - n_out)/4.
inline double ideal_groups_generalized(std::size_t n_in, std::size_t n_out, double forward_gain,
                                       double backward_gain) {
    if (forward_gain <= 0.0 || backward_gain <= 0.0) {
        throw DomainError("ideal_groups_generalized: gains must be positive");
    }
    return ((forward_gain / backward_gain) * static_cast<double>(n_in) -
            static_cast<double>(n_out)) /
           4.0;
}

/// All divisors of n, ascending. Trial division up to sqrt(n).
inline std::vector<std::size_t> divisors(std::size_t n) {
    if (n == 0) throw DomainError("divisors: n must be positive");
    std::vector<std::size_t> small, large;
    for (std::size_t d = 1; d * d <= n; ++d) {
        if (n % d == 0) {
            small.push_back(d);
            if (d != n / d) large.push_back(n / d);
        }
    }
    small.insert(small.end(), large.rbegin(), large.rend());
    return small;
}

/// Divisor of n_out nearest to g in log2 scale; exact ties go to the smaller
/// divisor (fewer groups).
inline std::size_t nearest_divisor_log2(double g, std::size_t n_out) {
    if (g <= 0.0) throw DomainError("nearest_divisor_log2: g must be positive");
    const double target = std::log2(g);
    std::size_t best = 1;
    double best_dist = std::abs(std::log2(1.0) - target);
    for (std::size_t d : divisors(n_out)) {
        const double dist = std::abs(std::log2(static_cast<double>(d)) - target);
        if (dist < best_dist) {
            best = d;
            best_dist = dist;
        }
    }
    return best;
}

/// Log-space nearest-divisor rule: clamp the ideal count to [1, n_out]
/// (lower bound first), then pick the divisor of n_out nearest in log2.
/// The case label records which clamp governed.
inline std::pair<std::size_t, GroupCase> practical_from_ideal(double g_ideal, std::size_t n_out) {
    GroupCase label = GroupCase::DivisorSearch;
    if (g_ideal <= 1.0) label = GroupCase::LowerBound;
    if (g_ideal >= static_cast<double>(n_out)) label = GroupCase::UpperBound;
    const double clamped = std::min(std::max(g_ideal, 1.0), static_cast<double>(n_out));
    return {nearest_divisor_log2(clamped, n_out), label};
}

/// Practical group count for one layer's widths. Case 1: n_in <= n_out gives
/// 1 group. Case 2: n_in >= 5*n_out gives n_out groups. Otherwise the divisor
/// search on the clamped ideal count decides.
inline std::pair<std::size_t, GroupCase> practical_groups(std::size_t n_in, std::size_t n_out) {
    if (n_in == 0 || n_out == 0) {
        throw DomainError("practical_groups: widths must be positive");
    }
    const auto [g, _] = practical_from_ideal(ideal_groups(n_in, n_out), n_out);
    GroupCase label = GroupCase::DivisorSearch;
    if (n_in <= n_out) label = GroupCase::LowerBound;
    else if (n_in >= 5 * n_out) label = GroupCase::UpperBound;
    return {g, label};
}

/// Alternative criterion: divisor of n_out whose K is nearest to 1 in linear
/// scale. Exposed both as a named policy and as the cross-check oracle for the
/// log-space rule; the two can disagree.
inline std::size_t practical_groups_k_criterion(std::size_t n_in, std::size_t n_out) {
    if (n_in == 0 || n_out == 0) {
        throw DomainError("practical_groups_k_criterion: widths must be positive");
    }
    std::size_t best = 1;
    double best_dist = std::abs(k_ratio(n_in, n_out, 1.0) - 1.0);
    for (std::size_t d : divisors(n_out)) {
        const double dist = std::abs(k_ratio(n_in, n_out, static_cast<double>(d)) - 1.0);
        if (dist < best_dist) {
            best = d;
            best_dist = dist;
        }
    }
    return best;
}

/// Measured (forward, backward) activation gains keyed by canonical
/// activation name, e.g. {"tanh", {0.394, 0.464}}.
using GainTable = std::map<std::string, std::pair<double, double>>;

struct LayerPlan {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::string activation;
    double gain_ratio = 1.0;   // F/B actually used
    double g_ideal = 0.0;      // unclamped, possibly <= 0 or > n_out
    double g_clamped = 1.0;    // in [1, n_out]
    std::size_t g_practical = 1;
    double k_at_practical = 0.0;
    std::size_t g_k_criterion = 1;
    GroupCase case_label = GroupCase::DivisorSearch;
    bool criteria_agree = true;
    // Set when the activation's gains vary with scale but no measured gain was
    // supplied, so the plain formula was used as a fallback.
    bool gain_warning = false;
};

struct GroupPlan {
    std::vector<LayerPlan> layers;
};

/// Per-layer group decision for a whole architecture. Layers whose activation
/// has an entry in gain_table use the generalized formula with those gains;
/// otherwise the layer's gain_ratio (default 1) applies.
inline GroupPlan plan_architecture(std::span<const LayerSpec> layers,
                                   const GainTable* gain_table = nullptr) {
    if (layers.empty()) throw DomainError("plan_architecture: empty layer list");
    GroupPlan plan;
    plan.layers.reserve(layers.size());
    for (const auto& layer : layers) {
        if (layer.n_in == 0 || layer.n_out == 0) {
            throw DomainError("plan_architecture: widths must be positive");
        }
        if (layer.gain_ratio <= 0.0) {
            throw DomainError("plan_architecture: gain_ratio must be positive");
        }
        LayerPlan lp;
        lp.n_in = layer.n_in;
        lp.n_out = layer.n_out;
        lp.activation = layer.activation.name();
        lp.gain_ratio = layer.gain_ratio;
        if (gain_table) {
            if (auto it = gain_table->find(layer.activation.name()); it != gain_table->end()) {
                lp.gain_ratio = it->second.first / it->second.second;
            }
        }
        lp.g_ideal = (lp.gain_ratio * static_cast<double>(layer.n_in) -
                      static_cast<double>(layer.n_out)) /
                     4.0;
        lp.g_clamped = std::min(std::max(lp.g_ideal, 1.0), static_cast<double>(layer.n_out));
        if (lp.gain_ratio == 1.0) {
            auto [g, label] = practical_groups(layer.n_in, layer.n_out);
            lp.g_practical = g;
            lp.case_label = label;
            lp.gain_warning = !layer.activation.gain_stable();
        } else {
            // Case boundaries scale with the gain ratio.
            auto [g, _] = practical_from_ideal(lp.g_ideal, layer.n_out);
            lp.g_practical = g;
            const double effective_in = lp.gain_ratio * static_cast<double>(layer.n_in);
            if (effective_in <= static_cast<double>(layer.n_out)) {
                lp.case_label = GroupCase::LowerBound;
            } else if (effective_in >= 5.0 * static_cast<double>(layer.n_out)) {
                lp.case_label = GroupCase::UpperBound;
            } else {
                lp.case_label = GroupCase::DivisorSearch;
            }
        }
        lp.k_at_practical = k_ratio(layer.n_in, layer.n_out, static_cast<double>(lp.g_practical));
        lp.g_k_criterion = practical_groups_k_criterion(layer.n_in, layer.n_out);
        lp.criteria_agree = lp.g_k_criterion == lp.g_practical;
        plan.layers.push_back(lp);
    }
    return plan;
}

} // namespace gnplan
