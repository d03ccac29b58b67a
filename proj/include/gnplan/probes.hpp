#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gnplan/activation.hpp"
#include "gnplan/errors.hpp"
#include "gnplan/matrix.hpp"
#include "gnplan/rng.hpp"
#include "gnplan/stats.hpp"
#include "gnplan/unit_block.hpp"

namespace gnplan {

/// Monte-Carlo setup for the gradient variance-ratio measurement: two unit
/// blocks (n_in -> n_in -> n_out), weights resampled per trial, ratios
/// measured at the second block.
struct ProbeConfig {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::size_t groups = 1;
    std::uint64_t trials = 10000;
    std::uint64_t seed = 42;
    double weight_std = 1.0;
};

struct RatioEstimate {
    double empirical = 0.0;
    double theoretical = 0.0;
    double rel_error = 0.0;
};

/// Empirical-vs-closed-form results for the four backward variance ratios:
/// A: across the weight layer, B: across the normalization (scaled by the
/// measured group variance), C: across the activation, D: across the whole
/// block.
struct VarianceReport {
    RatioEstimate eq_a, eq_b, eq_c, eq_d;
    double sigma2_mean = 0.0; // group variance of the measured block, averaged over trials
    std::uint64_t trials = 0;
    std::uint64_t seed = 0;
    std::uint64_t resampled_trials = 0;
};

/// Closed-form right-hand sides:
///   A = n_out * weight_std^2
///   B = 1 + 4 * groups / n_out
///   C = 1/2 (ReLU)
///   D = (n_out / n_in) * (1 + 4 * groups / n_out)
inline std::array<double, 4> theoretical_ratios(std::size_t n_in, std::size_t n_out,
                                                std::size_t groups, double weight_std) {
    if (groups == 0 || n_out % groups != 0) {
        throw DomainError("theoretical_ratios: groups must divide n_out");
    }
    const double ng = static_cast<double>(n_out) / static_cast<double>(groups);
    const double a = static_cast<double>(n_out) * weight_std * weight_std;
    const double b = 1.0 + 4.0 / ng;
    const double c = 0.5;
    const double d = (static_cast<double>(n_out) / static_cast<double>(n_in)) * b;
    return {a, b, c, d};
}

namespace detail {

struct TrialRatios {
    double a, b, c, d;
    double sigma2_mean;
};

// One Monte-Carlo experiment: fresh weights and input, forward through both
// blocks, analytic backward from a random linear read-out, feature-axis
// biased variances. Throws DegenerateGroupError (or DomainError on a zero
// denominator) so the caller can resample.
inline TrialRatios probe_trial(const ProbeConfig& cfg, std::size_t groups_block1,
                               RngStream stream) {
    const Matrix w1 = sample_normal(stream, 0.0, cfg.weight_std, cfg.n_in, cfg.n_in);
    const Matrix w2 = sample_normal(stream, 0.0, cfg.weight_std, cfg.n_in, cfg.n_out);
    const Matrix x = sample_normal(stream, 0.0, 1.0, 1, cfg.n_in);
    const Matrix c = sample_normal(stream, 0.0, 1.0, 1, cfg.n_out);

    const UnitBlockParams block1(cfg.n_in, cfg.n_in, groups_block1, w1);
    const UnitBlockParams block2(cfg.n_in, cfg.n_out, cfg.groups, w2);

    const ForwardTrace t1 = unit_block_forward(block1, x);
    const ForwardTrace t2 = unit_block_forward(block2, t1.x_next);
    const GradientTrace g2 = unit_block_backward(block2, t2, c);

    const double var_dx = var_biased(g2.d_x.row(0));
    const double var_dy = var_biased(g2.d_y.row(0));
    const double var_dz = var_biased(g2.d_z.row(0));
    const double var_c = var_biased(c.row(0));
    if (var_dy == 0.0 || var_dz == 0.0 || var_c == 0.0) {
        throw DomainError("probe_trial: zero gradient variance");
    }
    const double sigma2_mean = mean(t2.sigma2.row(0));

    return {var_dx / var_dy, sigma2_mean * var_dy / var_dz, var_dz / var_c, var_dx / var_c,
            sigma2_mean};
}

} // namespace detail

/// Runs the two-block experiment cfg.trials times and averages the per-trial
/// ratios. Trial t draws from RngStream(seed, t); a degenerate trial is
/// resampled from stream index attempt*trials + t, so results are identical
/// under any parallel schedule. Group size 1 is refused: every group variance
/// would be exactly zero.
inline VarianceReport measure_variance_ratios(const ProbeConfig& cfg) {
    if (cfg.n_in == 0 || cfg.n_out == 0 || cfg.groups == 0 || cfg.trials == 0) {
        throw DomainError("measure_variance_ratios: sizes and trials must be positive");
    }
    if (cfg.n_out % cfg.groups != 0) {
        throw DomainError("measure_variance_ratios: groups (" + std::to_string(cfg.groups) +
                          ") must divide n_out (" + std::to_string(cfg.n_out) + ")");
    }
    if (cfg.groups == cfg.n_out) {
        throw DomainError("measure_variance_ratios: group size 1 is degenerate (zero variance "
                          "in every group with eps == 0)");
    }
    if (cfg.weight_std <= 0.0) {
        throw DomainError("measure_variance_ratios: weight_std must be positive");
    }
    const std::size_t groups_block1 = (cfg.n_in % cfg.groups == 0) ? cfg.groups : 1;

    const auto n = static_cast<long long>(cfg.trials);
    std::vector<detail::TrialRatios> results(cfg.trials);
    std::vector<std::uint32_t> attempts(cfg.trials, 0);

#pragma omp parallel for schedule(dynamic, 8)
    for (long long t = 0; t < n; ++t) {
        for (std::uint64_t attempt = 0;; ++attempt) {
            try {
                results[t] = detail::probe_trial(
                    cfg, groups_block1,
                    RngStream(cfg.seed, attempt * cfg.trials + static_cast<std::uint64_t>(t)));
                attempts[t] = static_cast<std::uint32_t>(attempt);
                break;
            } catch (const Error&) {
                if (attempt > 64) throw;
            }
        }
    }

    // Ordered reduction keeps the report bit-identical across thread counts.
    double sa = 0.0, sb = 0.0, sc = 0.0, sd = 0.0, ss = 0.0;
    std::uint64_t resampled = 0;
    for (std::uint64_t t = 0; t < cfg.trials; ++t) {
        sa += results[t].a;
        sb += results[t].b;
        sc += results[t].c;
        sd += results[t].d;
        ss += results[t].sigma2_mean;
        resampled += attempts[t];
    }
    const double inv = 1.0 / static_cast<double>(cfg.trials);
    const auto theory = theoretical_ratios(cfg.n_in, cfg.n_out, cfg.groups, cfg.weight_std);

    VarianceReport report;
    report.trials = cfg.trials;
    report.seed = cfg.seed;
    report.resampled_trials = resampled;
    report.sigma2_mean = ss * inv;
    const std::array<double, 4> emp = {sa * inv, sb * inv, sc * inv, sd * inv};
    RatioEstimate* slots[4] = {&report.eq_a, &report.eq_b, &report.eq_c, &report.eq_d};
    for (int i = 0; i < 4; ++i) {
        slots[i]->empirical = emp[i];
        slots[i]->theoretical = theory[i];
        slots[i]->rel_error = std::abs(emp[i] - theory[i]) / std::abs(theory[i]);
    }
    return report;
}

/// Monte-Carlo estimate of the forward and backward activation gains at one
/// input scale sigma.
struct GainConfig {
    ActivationKind activation = ActivationKind::relu();
    double sigma = 1.0;
    std::uint64_t samples = 1000000;
    std::uint64_t seed = 42;
};

struct GainReport {
    double forward_gain = 0.0;
    double backward_gain = 0.0;
    double ratio() const { return backward_gain / forward_gain; }
};

/// F = E[f(X)^2]/Var[X] with X ~ N(0, sigma^2);
/// B = Var[f'(X) Y]/Var[Y] with independent Y ~ N(0, 1).
inline GainReport measure_activation_gains(const GainConfig& cfg) {
    if (cfg.sigma <= 0.0) throw DomainError("measure_activation_gains: sigma must be positive");
    if (cfg.samples == 0) throw DomainError("measure_activation_gains: samples must be positive");
    RngStream xs(cfg.seed, 0);
    RngStream ys(cfg.seed, 1);
    double sum_f2 = 0.0, sum_x = 0.0, sum_x2 = 0.0;
    double sum_g = 0.0, sum_g2 = 0.0, sum_y = 0.0, sum_y2 = 0.0;
    for (std::uint64_t i = 0; i < cfg.samples; ++i) {
        const double x = cfg.sigma * xs.next_standard_normal();
        const double y = ys.next_standard_normal();
        const double fx = cfg.activation.f(x);
        const double gx = cfg.activation.df(x) * y;
        sum_f2 += fx * fx;
        sum_x += x;
        sum_x2 += x * x;
        sum_g += gx;
        sum_g2 += gx * gx;
        sum_y += y;
        sum_y2 += y * y;
    }
    const double inv = 1.0 / static_cast<double>(cfg.samples);
    const double var_x = sum_x2 * inv - (sum_x * inv) * (sum_x * inv);
    const double var_g = sum_g2 * inv - (sum_g * inv) * (sum_g * inv);
    const double var_y = sum_y2 * inv - (sum_y * inv) * (sum_y * inv);
    GainReport r;
    r.forward_gain = (sum_f2 * inv) / var_x;
    r.backward_gain = var_g / var_y;
    return r;
}

/// Exact gains of PReLU with slope a: F = B = (1 + a^2)/2 at every sigma.
inline double prelu_gain_closed_form(double a) {
    return (1.0 + a * a) / 2.0;
}

struct HomogeneityReport {
    bool homogeneous = false;
    double max_forward_dev = 0.0;  // max relative deviation from the first sigma
    double max_backward_dev = 0.0;
    std::vector<std::pair<double, GainReport>> gains; // (sigma, gains)
};

/// Checks whether measured gains are sigma-invariant within tol (relative to
/// the first sigma's gains). Scale-invariant gains characterize homogeneous
/// activations (f(kx) = +-k f(x)); sigmoid-like activations fail.
inline HomogeneityReport homogeneity_check(const ActivationKind& activation,
                                           std::span<const double> sigmas, std::uint64_t samples,
                                           std::uint64_t seed, double tol) {
    if (sigmas.size() < 2) {
        throw DomainError("homogeneity_check: need at least two sigma values");
    }
    HomogeneityReport report;
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        GainConfig cfg;
        cfg.activation = activation;
        cfg.sigma = sigmas[i];
        cfg.samples = samples;
        cfg.seed = seed + i; // independent draws per sigma
        report.gains.emplace_back(sigmas[i], measure_activation_gains(cfg));
    }
    const GainReport& ref = report.gains.front().second;
    for (std::size_t i = 1; i < report.gains.size(); ++i) {
        const GainReport& g = report.gains[i].second;
        report.max_forward_dev = std::max(
            report.max_forward_dev, std::abs(g.forward_gain - ref.forward_gain) / ref.forward_gain);
        report.max_backward_dev =
            std::max(report.max_backward_dev,
                     std::abs(g.backward_gain - ref.backward_gain) / ref.backward_gain);
    }
    report.homogeneous = report.max_forward_dev <= tol && report.max_backward_dev <= tol;
    return report;
}

} // namespace gnplan
