#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gnplan/dataset.hpp"
#include "gnplan/errors.hpp"
#include "gnplan/matrix.hpp"
#include "gnplan/rng.hpp"
#include "gnplan/unit_block.hpp"

namespace gnplan {

enum class InitRule { Unit, FanInScaled };

inline std::string to_string(InitRule r) {
    return r == InitRule::Unit ? "unit" : "fan_in_scaled";
}

inline InitRule parse_init_rule(const std::string& s) {
    if (s == "unit") return InitRule::Unit;
    if (s == "fan_in_scaled") return InitRule::FanInScaled;
    throw DomainError("unknown init rule '" + s + "'; valid: unit, fan_in_scaled");
}

struct TrainConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    std::size_t batch_size = 128;
    std::size_t epochs = 20;
    std::uint64_t seed = 42;
    InitRule init = InitRule::FanInScaled;
    double eps = 1e-5; // normalization eps in training mode

    void validate() const {
        if (learning_rate < 0.0) throw DomainError("TrainConfig: learning_rate must be >= 0");
        if (momentum < 0.0 || momentum >= 1.0) throw DomainError("TrainConfig: momentum in [0, 1)");
        if (batch_size == 0) throw DomainError("TrainConfig: batch_size must be positive");
        if (epochs == 0) throw DomainError("TrainConfig: epochs must be positive");
    }
};

/// Group-normalized MLP: hidden unit blocks followed by a plain linear head.
struct MlpModel {
    std::vector<UnitBlockParams> blocks;
    Matrix head_weights; // last width x classes
    std::vector<double> head_bias;

    std::size_t input_dim() const {
        return blocks.empty() ? head_weights.rows() : blocks.front().n_in;
    }
    int classes() const { return static_cast<int>(head_weights.cols()); }
};

/// One hidden layer description for model construction.
struct HiddenSpec {
    std::size_t width = 0;
    std::size_t groups = 1;
};

inline double init_std(InitRule rule, std::size_t fan_in) {
    return rule == InitRule::Unit ? 1.0 : std::sqrt(2.0 / static_cast<double>(fan_in));
}

/// Builds a model with Gaussian block weights (std per init rule) and a
/// small-std head (0.01) so initial logits are near zero and the initial loss
/// sits at ln(classes).
inline MlpModel make_mlp(std::size_t input_dim, const std::vector<HiddenSpec>& hidden, int classes,
                         const ActivationKind& activation, InitRule rule, double eps,
                         RngStream stream) {
    if (input_dim == 0 || classes <= 0) {
        throw DomainError("make_mlp: input_dim and classes must be positive");
    }
    MlpModel model;
    std::size_t width = input_dim;
    for (const auto& h : hidden) {
        if (h.width == 0) throw DomainError("make_mlp: hidden width must be positive");
        if (h.groups == 0 || h.width % h.groups != 0) {
            throw DomainError("make_mlp: groups (" + std::to_string(h.groups) +
                              ") must divide hidden width (" + std::to_string(h.width) + ")");
        }
        Matrix w = sample_normal(stream, 0.0, init_std(rule, width), width, h.width);
        model.blocks.emplace_back(width, h.width, h.groups, std::move(w), activation, eps);
        width = h.width;
    }
    model.head_weights = sample_normal(stream, 0.0, 0.01, width, static_cast<std::size_t>(classes));
    model.head_bias.assign(static_cast<std::size_t>(classes), 0.0);
    return model;
}

struct EpochStats {
    double train_loss = 0.0;
    double test_error_pct = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    double final_test_error_pct = 0.0;
    bool diverged = false;
    std::vector<std::size_t> groups; // per hidden block
    TrainConfig config;
};

namespace detail {

struct BatchForward {
    std::vector<ForwardTrace> traces;
    Matrix logits;
};

inline BatchForward mlp_forward(const MlpModel& model, Matrix x) {
    BatchForward out;
    const Matrix* h = &x;
    out.traces.reserve(model.blocks.size());
    for (const auto& block : model.blocks) {
        out.traces.push_back(unit_block_forward(block, *h));
        h = &out.traces.back().x_next;
    }
    out.logits = matmul(*h, model.head_weights);
    for (std::size_t r = 0; r < out.logits.rows(); ++r) {
        for (std::size_t c = 0; c < out.logits.cols(); ++c) {
            out.logits(r, c) += model.head_bias[c];
        }
    }
    if (out.traces.empty()) {
        ForwardTrace input_only;
        input_only.x = std::move(x);
        out.traces.push_back(std::move(input_only));
    }
    return out;
}

/// Returns the summed cross-entropy over the batch and writes the logit
/// gradient of the MEAN loss into d_logits.
inline double softmax_xent(const Matrix& logits, std::span<const int> labels, Matrix& d_logits) {
    const std::size_t batch = logits.rows(), classes = logits.cols();
    d_logits = Matrix(batch, classes);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = logits.data() + b * classes;
        double m = row[0];
        for (std::size_t c = 1; c < classes; ++c) m = std::max(m, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - m);
        const double lse = m + std::log(sum);
        loss_sum += lse - row[static_cast<std::size_t>(labels[b])];
        double* g = d_logits.data() + b * classes;
        for (std::size_t c = 0; c < classes; ++c) {
            g[c] = std::exp(row[c] - m) / sum;
        }
        g[static_cast<std::size_t>(labels[b])] -= 1.0;
    }
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < d_logits.size(); ++i) d_logits.data()[i] *= inv_batch;
    return loss_sum;
}

inline Matrix slice_rows(const Matrix& m, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* src = m.data() + idx[i] * m.cols();
        std::copy(src, src + m.cols(), out.data() + i * m.cols());
    }
    return out;
}

} // namespace detail

/// Gradients of the mean cross-entropy over a batch with respect to every
/// trainable parameter.
struct ModelGradients {
    std::vector<Matrix> block_weights;
    Matrix head_weights;
    std::vector<double> head_bias;
};

/// Mean softmax cross-entropy of one batch plus its analytic gradients.
inline std::pair<double, ModelGradients> model_loss_and_gradients(const MlpModel& model,
                                                                  const Matrix& x,
                                                                  std::span<const int> labels) {
    if (x.rows() != labels.size()) {
        throw ShapeError("model_loss_and_gradients: batch " + x.shape_string() + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    auto fwd = detail::mlp_forward(model, x);
    Matrix d_logits;
    const double loss_sum = detail::softmax_xent(fwd.logits, labels, d_logits);

    ModelGradients grads;
    const Matrix& h = model.blocks.empty() ? fwd.traces.back().x : fwd.traces.back().x_next;
    grads.head_weights = matmul(transpose(h), d_logits);
    grads.head_bias.assign(model.head_bias.size(), 0.0);
    for (std::size_t r = 0; r < d_logits.rows(); ++r) {
        for (std::size_t c = 0; c < d_logits.cols(); ++c) {
            grads.head_bias[c] += d_logits(r, c);
        }
    }
    Matrix d_hidden = matmul_transposed(d_logits, model.head_weights);
    grads.block_weights.resize(model.blocks.size());
    for (std::size_t i = model.blocks.size(); i-- > 0;) {
        GradientTrace g = unit_block_backward(model.blocks[i], fwd.traces[i], std::move(d_hidden));
        grads.block_weights[i] = weight_gradient(fwd.traces[i], g);
        d_hidden = std::move(g.d_x);
    }
    return {loss_sum / static_cast<double>(x.rows()), std::move(grads)};
}

/// Classification error (%) on a dataset, evaluated in chunks. Argmax ties
/// resolve to the lowest class index.
inline double evaluate_error_pct(const MlpModel& model, const Dataset& data) {
    const std::size_t n = data.size();
    const std::size_t chunk = 512;
    std::size_t wrong = 0;
    std::vector<std::size_t> idx(chunk);
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t len = std::min(chunk, n - start);
        idx.resize(len);
        std::iota(idx.begin(), idx.end(), start);
        auto fwd = detail::mlp_forward(model, detail::slice_rows(data.features, idx));
        for (std::size_t b = 0; b < len; ++b) {
            const double* row = fwd.logits.data() + b * fwd.logits.cols();
            std::size_t best = 0;
            for (std::size_t c = 1; c < fwd.logits.cols(); ++c) {
                if (row[c] > row[best]) best = c;
            }
            if (static_cast<int>(best) != data.labels[start + b]) ++wrong;
        }
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(n);
}

/// Hidden activations of the last block for a batch of inputs (the head input).
/// For a model without hidden blocks this is the input itself.
inline Matrix hidden_activations(const MlpModel& model, const Matrix& x) {
    auto fwd = detail::mlp_forward(model, x);
    return model.blocks.empty() ? fwd.traces.back().x : fwd.traces.back().x_next;
}

/// Mini-batch SGD with momentum on softmax cross-entropy. Normalization
/// statistics are per sample (no cross-batch mixing, no running stats). The
/// epoch train loss is the mean per-sample loss seen during the epoch; test
/// error is evaluated on the full test set after every epoch. A non-finite
/// loss aborts with the divergence flag set and the partial report returned.
inline TrainReport train_mlp(MlpModel& model, const Dataset& train, const Dataset& test,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (train.features.cols() != model.input_dim()) {
        throw ShapeError("train_mlp: features " + train.features.shape_string() +
                         " vs model input dim " + std::to_string(model.input_dim()));
    }
    if (train.classes != model.classes() || test.classes != model.classes()) {
        throw DomainError("train_mlp: dataset classes do not match the model");
    }

    TrainReport report;
    report.config = cfg;
    for (const auto& b : model.blocks) report.groups.push_back(b.groups);

    std::vector<Matrix> vel_w;
    vel_w.reserve(model.blocks.size());
    for (const auto& b : model.blocks) vel_w.emplace_back(b.n_in, b.n_out);
    Matrix vel_head(model.head_weights.rows(), model.head_weights.cols());
    std::vector<double> vel_bias(model.head_bias.size(), 0.0);

    const std::size_t n = train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        RngStream shuffle(cfg.seed, 1000 + epoch);
        for (std::size_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(shuffle.next_uniform() * double(i + 1));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n - start);
            std::span<const std::size_t> batch_idx(order.data() + start, len);
            Matrix x = detail::slice_rows(train.features, batch_idx);
            std::vector<int> labels(len);
            for (std::size_t i = 0; i < len; ++i) labels[i] = train.labels[batch_idx[i]];

            auto [batch_loss, grads] = model_loss_and_gradients(model, x, labels);
            if (!std::isfinite(batch_loss)) {
                report.diverged = true;
                report.final_test_error_pct =
                    report.epochs.empty() ? 100.0 : report.epochs.back().test_error_pct;
                return report;
            }
            loss_sum += batch_loss * static_cast<double>(len);

            // Momentum update: v = mu*v + g; w -= lr*v.
            auto update = [&](Matrix& w, Matrix& v, const Matrix& g) {
                for (std::size_t i = 0; i < w.size(); ++i) {
                    v.data()[i] = cfg.momentum * v.data()[i] + g.data()[i];
                    w.data()[i] -= cfg.learning_rate * v.data()[i];
                }
            };
            for (std::size_t i = 0; i < model.blocks.size(); ++i) {
                update(model.blocks[i].weights, vel_w[i], grads.block_weights[i]);
            }
            update(model.head_weights, vel_head, grads.head_weights);
            for (std::size_t c = 0; c < model.head_bias.size(); ++c) {
                vel_bias[c] = cfg.momentum * vel_bias[c] + grads.head_bias[c];
                model.head_bias[c] -= cfg.learning_rate * vel_bias[c];
            }
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(n);
        stats.test_error_pct = evaluate_error_pct(model, test);
        report.epochs.push_back(stats);
    }
    report.final_test_error_pct = report.epochs.back().test_error_pct;
    return report;
}

struct SweepConfig {
    std::size_t input_dim = 0;
    std::size_t hidden_width = 512;
    int classes = 10;
    ActivationKind activation = ActivationKind::relu();
    TrainConfig train;
};

struct SweepEntry {
    std::size_t groups = 0;
    std::vector<double> run_errors;
    double mean_error = 0.0;
    std::vector<TrainReport> reports;
};

/// Table-style sweep over the hidden layer's group count: trains one model
/// per (group value, run) with run-indexed seeds and reports per-run and mean
/// final test errors. Group values must divide the hidden width.
inline std::vector<SweepEntry> sweep_groups(const std::vector<std::size_t>& group_values,
                                            const SweepConfig& cfg, const Dataset& train,
                                            const Dataset& test, std::size_t runs) {
    if (group_values.empty()) throw DomainError("sweep_groups: empty group list");
    if (runs == 0) throw DomainError("sweep_groups: runs must be positive");
    for (std::size_t g : group_values) {
        if (g == 0 || cfg.hidden_width % g != 0) {
            throw DomainError("sweep_groups: groups " + std::to_string(g) +
                              " does not divide hidden width " + std::to_string(cfg.hidden_width));
        }
    }
    std::vector<SweepEntry> entries;
    entries.reserve(group_values.size());
    for (std::size_t g : group_values) {
        SweepEntry entry;
        entry.groups = g;
        for (std::size_t run = 0; run < runs; ++run) {
            TrainConfig run_cfg = cfg.train;
            run_cfg.seed = cfg.train.seed + run;
            MlpModel model = make_mlp(cfg.input_dim, {{cfg.hidden_width, g}}, cfg.classes,
                                      cfg.activation, run_cfg.init, run_cfg.eps,
                                      RngStream(run_cfg.seed, 0));
            TrainReport r = train_mlp(model, train, test, run_cfg);
            entry.run_errors.push_back(r.final_test_error_pct);
            entry.reports.push_back(std::move(r));
        }
        entry.mean_error = 0.0;
        for (double e : entry.run_errors) entry.mean_error += e;
        entry.mean_error /= static_cast<double>(entry.run_errors.size());
        entries.push_back(std::move(entry));
    }
    return entries;
}

} // namespace gnplan
