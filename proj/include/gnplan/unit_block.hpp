#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "gnplan/activation.hpp"
#include "gnplan/errors.hpp"
#include "gnplan/matrix.hpp"

namespace gnplan {

/// One unit block: weight layer -> group normalization -> activation.
/// Features are grouped contiguously: group s covers columns
/// [s*group_size, (s+1)*group_size). The affine pair (gamma, beta) is part of
/// the normalization but is fixed, not trained.
struct UnitBlockParams {
    std::size_t n_in = 0;
    std::size_t n_out = 0;
    std::size_t groups = 1;
    std::size_t group_size = 0;
    Matrix weights; // n_in x n_out
    double gamma = 1.0;
    double beta = 0.0;
    ActivationKind activation = ActivationKind::relu();
    double eps = 0.0; // added to the group variance inside the square root

    UnitBlockParams(std::size_t n_in_, std::size_t n_out_, std::size_t groups_, Matrix weights_,
                    ActivationKind activation_ = ActivationKind::relu(), double eps_ = 0.0,
                    double gamma_ = 1.0, double beta_ = 0.0)
        : n_in(n_in_),
          n_out(n_out_),
          groups(groups_),
          weights(std::move(weights_)),
          gamma(gamma_),
          beta(beta_),
          activation(activation_),
          eps(eps_) {
        if (n_in == 0 || n_out == 0 || groups == 0) {
            throw DomainError("UnitBlockParams: n_in, n_out and groups must be positive");
        }
        if (n_out % groups != 0) {
            throw DomainError("UnitBlockParams: groups (" + std::to_string(groups) +
                              ") must divide n_out (" + std::to_string(n_out) + ")");
        }
        if (weights.rows() != n_in || weights.cols() != n_out) {
            throw ShapeError("UnitBlockParams: weights " + weights.shape_string() +
                             ", expected " + Matrix::shape_string(n_in, n_out));
        }
        if (eps < 0.0) {
            throw DomainError("UnitBlockParams: eps must be non-negative");
        }
        group_size = n_out / groups;
    }
};

/// Cached forward quantities of one batch through a unit block.
struct ForwardTrace {
    Matrix x;      // batch x n_in
    Matrix y;      // batch x n_out, pre-normalization
    Matrix mu;     // batch x groups
    Matrix sigma2; // batch x groups, biased group variance of y
    Matrix z;      // batch x n_out, normalized (incl. affine)
    Matrix x_next; // batch x n_out, activated
};

/// All four gradients of a backward pass, shaped like their forward
/// counterparts.
struct GradientTrace {
    Matrix d_x_next;
    Matrix d_z;
    Matrix d_y;
    Matrix d_x;
};

inline Matrix linear_forward(const UnitBlockParams& params, const Matrix& x) {
    if (x.cols() != params.n_in) {
        throw ShapeError("linear_forward: input " + x.shape_string() + " vs weights " +
                         params.weights.shape_string());
    }
    return matmul(x, params.weights);
}

struct GroupnormResult {
    Matrix z;
    Matrix mu;
    Matrix sigma2;
};

/// Per-sample, per-group standardization with biased variance:
/// z = gamma * (y - mu_s) / sqrt(sigma_s^2 + eps) + beta.
/// With eps == 0 a zero-variance group is an error naming sample and group.
inline GroupnormResult groupnorm_forward(const UnitBlockParams& params, const Matrix& y) {
    if (y.cols() != params.n_out) {
        throw ShapeError("groupnorm_forward: input " + y.shape_string() + ", expected cols " +
                         std::to_string(params.n_out));
    }
    const std::size_t batch = y.rows();
    const std::size_t ng = params.group_size;
    GroupnormResult r{Matrix(batch, params.n_out), Matrix(batch, params.groups),
                      Matrix(batch, params.groups)};
    for (std::size_t b = 0; b < batch; ++b) {
        const double* yrow = y.data() + b * params.n_out;
        double* zrow = r.z.data() + b * params.n_out;
        for (std::size_t s = 0; s < params.groups; ++s) {
            const double* yg = yrow + s * ng;
            double sum = 0.0;
            for (std::size_t j = 0; j < ng; ++j) sum += yg[j];
            const double mu = sum / static_cast<double>(ng);
            double sq = 0.0;
            for (std::size_t j = 0; j < ng; ++j) {
                const double d = yg[j] - mu;
                sq += d * d;
            }
            const double sigma2 = sq / static_cast<double>(ng);
            if (sigma2 + params.eps <= 0.0) {
                throw DegenerateGroupError(b, s);
            }
            r.mu(b, s) = mu;
            r.sigma2(b, s) = sigma2;
            const double inv_std = 1.0 / std::sqrt(sigma2 + params.eps);
            double* zg = zrow + s * ng;
            for (std::size_t j = 0; j < ng; ++j) {
                zg[j] = params.gamma * (yg[j] - mu) * inv_std + params.beta;
            }
        }
    }
    return r;
}

inline Matrix activation_forward(const ActivationKind& kind, const Matrix& z) {
    return apply_activation(kind, z);
}

inline Matrix activation_derivative(const ActivationKind& kind, const Matrix& z) {
    return apply_activation_derivative(kind, z);
}

/// Exact gradient through the normalization. Per sample and group, with
/// zt = (z - beta)/gamma and g the incoming gradient slice:
///   d_y_j = (gamma / sqrt(sigma^2 + eps)) * (g_j - mean(g) - zt_j * mean(zt * g))
/// The same expression differentiates through the eps-augmented sigma, so it
/// is valid for eps >= 0. Each group's d_y sums to zero and is orthogonal to
/// its zt direction.
inline Matrix groupnorm_backward(const UnitBlockParams& params, const ForwardTrace& trace,
                                 const Matrix& d_z) {
    if (!d_z.same_shape(trace.z)) {
        throw ShapeError("groupnorm_backward: d_z " + d_z.shape_string() + " vs z " +
                         trace.z.shape_string());
    }
    const std::size_t batch = d_z.rows();
    const std::size_t ng = params.group_size;
    Matrix d_y(batch, params.n_out);
    if (ng == 2 && params.eps == 0.0) {
        // Groups of two normalize to exactly (-1, +1): the Jacobian vanishes
        // identically, so the gradient is exactly zero.
        return d_y;
    }
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < params.groups; ++s) {
            const std::size_t off = b * params.n_out + s * ng;
            const double* g = d_z.data() + off;
            const double* z = trace.z.data() + off;
            const double inv_std = 1.0 / std::sqrt(trace.sigma2(b, s) + params.eps);
            double g_sum = 0.0, zg_sum = 0.0;
            for (std::size_t j = 0; j < ng; ++j) {
                const double zt = (z[j] - params.beta) / params.gamma;
                g_sum += g[j];
                zg_sum += zt * g[j];
            }
            const double g_mean = g_sum / static_cast<double>(ng);
            const double zg_mean = zg_sum / static_cast<double>(ng);
            double* out = d_y.data() + off;
            for (std::size_t j = 0; j < ng; ++j) {
                const double zt = (z[j] - params.beta) / params.gamma;
                out[j] = params.gamma * inv_std * (g[j] - g_mean - zt * zg_mean);
            }
        }
    }
    return d_y;
}

inline Matrix linear_backward(const UnitBlockParams& params, const Matrix& d_y) {
    if (d_y.cols() != params.n_out) {
        throw ShapeError("linear_backward: d_y " + d_y.shape_string() + " vs weights " +
                         params.weights.shape_string());
    }
    return matmul_transposed(d_y, params.weights); // d_y * W^T
}

inline ForwardTrace unit_block_forward(const UnitBlockParams& params, Matrix x) {
    ForwardTrace t;
    t.y = linear_forward(params, x);
    t.x = std::move(x);
    auto gn = groupnorm_forward(params, t.y);
    t.z = std::move(gn.z);
    t.mu = std::move(gn.mu);
    t.sigma2 = std::move(gn.sigma2);
    t.x_next = activation_forward(params.activation, t.z);
    return t;
}

inline GradientTrace unit_block_backward(const UnitBlockParams& params, const ForwardTrace& trace,
                                         Matrix d_x_next) {
    if (!d_x_next.same_shape(trace.x_next)) {
        throw ShapeError("unit_block_backward: d_x_next " + d_x_next.shape_string() + " vs x_next " +
                         trace.x_next.shape_string());
    }
    GradientTrace g;
    g.d_z = hadamard(d_x_next, activation_derivative(params.activation, trace.z));
    g.d_x_next = std::move(d_x_next);
    g.d_y = groupnorm_backward(params, trace, g.d_z);
    g.d_x = linear_backward(params, g.d_y);
    return g;
}

/// Batch-summed weight gradient d_W = x^T * d_y for training.
inline Matrix weight_gradient(const ForwardTrace& trace, const GradientTrace& grads) {
    return matmul(transpose(trace.x), grads.d_y);
}

/// Central-difference check of the analytic backward pass. The loss is the
/// fixed linear read-out L = sum(loss_weights .* x_next). Returns the maximum
/// over every input and weight entry of
///   |analytic - central| / max(|analytic|, |central|, 1e-12).
inline double finite_diff_check(const UnitBlockParams& params, const Matrix& x,
                                const Matrix& loss_weights, double h) {
    if (h <= 0.0) throw DomainError("finite_diff_check: h must be positive");
    auto loss = [&](const UnitBlockParams& p, const Matrix& input) {
        const ForwardTrace t = unit_block_forward(p, input);
        double acc = 0.0;
        for (std::size_t i = 0; i < t.x_next.size(); ++i) {
            acc += loss_weights.data()[i] * t.x_next.data()[i];
        }
        return acc;
    };

    const ForwardTrace trace = unit_block_forward(params, x);
    if (!loss_weights.same_shape(trace.x_next)) {
        throw ShapeError("finite_diff_check: loss_weights " + loss_weights.shape_string() +
                         " vs x_next " + trace.x_next.shape_string());
    }
    const GradientTrace grads = unit_block_backward(params, trace, loss_weights);
    const Matrix d_w = weight_gradient(trace, grads);

    double max_rel = 0.0;
    auto update = [&](double analytic, double numeric) {
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
        max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
    };

    Matrix xp = x;
    for (std::size_t i = 0; i < xp.size(); ++i) {
        const double orig = xp.data()[i];
        xp.data()[i] = orig + h;
        const double lp = loss(params, xp);
        xp.data()[i] = orig - h;
        const double lm = loss(params, xp);
        xp.data()[i] = orig;
        update(grads.d_x.data()[i], (lp - lm) / (2.0 * h));
    }

    UnitBlockParams pp = params;
    for (std::size_t i = 0; i < pp.weights.size(); ++i) {
        const double orig = pp.weights.data()[i];
        pp.weights.data()[i] = orig + h;
        const double lp = loss(pp, x);
        pp.weights.data()[i] = orig - h;
        const double lm = loss(pp, x);
        pp.weights.data()[i] = orig;
        update(d_w.data()[i], (lp - lm) / (2.0 * h));
    }
    return max_rel;
}

} // namespace gnplan
