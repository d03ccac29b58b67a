#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "gnplan/errors.hpp"
#include "gnplan/matrix.hpp"

namespace gnplan {

namespace detail {
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
inline double softplus(double x) {
    // log(1 + e^x) without overflow for large |x|.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}
inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;
inline constexpr double kInvSqrt2Pi = 0.3989422804014327;
} // namespace detail

/// An elementwise activation with its exact derivative. Kink conventions:
/// ReLU'(0) = 0, PReLU'(0) = slope. GELU uses the exact error-function form.
class ActivationKind {
public:
    enum class Kind { ReLU, PReLU, GELU, SiLU, ELU, SELU, Sigmoid, Tanh, Softplus, Softsign, LogSigmoid };

    ActivationKind() : kind_(Kind::ReLU), param_(0.0) {}

    static ActivationKind relu() { return {Kind::ReLU, 0.0}; }
    static ActivationKind prelu(double slope) { return {Kind::PReLU, slope}; }
    static ActivationKind gelu() { return {Kind::GELU, 0.0}; }
    static ActivationKind silu() { return {Kind::SiLU, 0.0}; }
    static ActivationKind elu(double alpha = 1.0) { return {Kind::ELU, alpha}; }
    static ActivationKind selu() { return {Kind::SELU, 0.0}; }
    static ActivationKind sigmoid() { return {Kind::Sigmoid, 0.0}; }
    static ActivationKind tanh() { return {Kind::Tanh, 0.0}; }
    static ActivationKind softplus() { return {Kind::Softplus, 0.0}; }
    static ActivationKind softsign() { return {Kind::Softsign, 0.0}; }
    static ActivationKind logsigmoid() { return {Kind::LogSigmoid, 0.0}; }

    Kind kind() const { return kind_; }
    double param() const { return param_; }

    double f(double x) const {
        switch (kind_) {
            case Kind::ReLU: return x > 0.0 ? x : 0.0;
            case Kind::PReLU: return x > 0.0 ? x : param_ * x;
            case Kind::GELU: return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
            case Kind::SiLU: return x * detail::sigmoid(x);
            case Kind::ELU: return x > 0.0 ? x : param_ * std::expm1(x);
            case Kind::SELU:
                return detail::kSeluLambda * (x > 0.0 ? x : detail::kSeluAlpha * std::expm1(x));
            case Kind::Sigmoid: return detail::sigmoid(x);
            case Kind::Tanh: return std::tanh(x);
            case Kind::Softplus: return detail::softplus(x);
            case Kind::Softsign: return x / (1.0 + std::abs(x));
            case Kind::LogSigmoid: return -detail::softplus(-x);
        }
        return 0.0;
    }

    double df(double x) const {
        switch (kind_) {
            case Kind::ReLU: return x > 0.0 ? 1.0 : 0.0;
            case Kind::PReLU: return x > 0.0 ? 1.0 : param_;
            case Kind::GELU: {
                const double phi = std::exp(-0.5 * x * x) * detail::kInvSqrt2Pi;
                return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
            }
            case Kind::SiLU: {
                const double s = detail::sigmoid(x);
                return s * (1.0 + x * (1.0 - s));
            }
            case Kind::ELU: return x > 0.0 ? 1.0 : param_ * std::exp(x);
            case Kind::SELU:
                return detail::kSeluLambda * (x > 0.0 ? 1.0 : detail::kSeluAlpha * std::exp(x));
            case Kind::Sigmoid: {
                const double s = detail::sigmoid(x);
                return s * (1.0 - s);
            }
            case Kind::Tanh: {
                const double t = std::tanh(x);
                return 1.0 - t * t;
            }
            case Kind::Softplus: return detail::sigmoid(x);
            case Kind::Softsign: {
                const double d = 1.0 + std::abs(x);
                return 1.0 / (d * d);
            }
            case Kind::LogSigmoid: return detail::sigmoid(-x);
        }
        return 0.0;
    }

    /// Canonical name, e.g. "relu", "prelu:0.25", "elu:1.5".
    std::string name() const {
        switch (kind_) {
            case Kind::ReLU: return "relu";
            case Kind::PReLU: return "prelu:" + format_param(param_);
            case Kind::GELU: return "gelu";
            case Kind::SiLU: return "silu";
            case Kind::ELU: return param_ == 1.0 ? "elu" : "elu:" + format_param(param_);
            case Kind::SELU: return "selu";
            case Kind::Sigmoid: return "sigmoid";
            case Kind::Tanh: return "tanh";
            case Kind::Softplus: return "softplus";
            case Kind::Softsign: return "softsign";
            case Kind::LogSigmoid: return "logsigmoid";
        }
        return "?";
    }

    /// Gains of these kinds are near scale-invariant with backward/forward
    /// ratio ~1, so width planning may use them without a measured gain table.
    bool gain_stable() const {
        switch (kind_) {
            case Kind::ReLU:
            case Kind::PReLU:
            case Kind::GELU:
            case Kind::SiLU:
            case Kind::ELU:
            case Kind::SELU: return true;
            default: return false;
        }
    }

    /// Parses "relu", "prelu:0.25", "elu", "elu:1.5", ... Unknown names raise
    /// DomainError listing every valid name.
    static ActivationKind parse(const std::string& text) {
        std::string base = text;
        double param = 0.0;
        bool has_param = false;
        if (auto pos = text.find(':'); pos != std::string::npos) {
            base = text.substr(0, pos);
            const std::string ptext = text.substr(pos + 1);
            try {
                std::size_t used = 0;
                param = std::stod(ptext, &used);
                has_param = used == ptext.size();
            } catch (const std::exception&) {
                has_param = false;
            }
            if (!has_param) {
                throw DomainError("activation '" + text + "': bad parameter '" + ptext + "'");
            }
        }
        if (base == "relu") return relu();
        if (base == "prelu") return prelu(has_param ? param : 0.25);
        if (base == "gelu") return gelu();
        if (base == "silu" || base == "swish") return silu();
        if (base == "elu") return elu(has_param ? param : 1.0);
        if (base == "selu") return selu();
        if (base == "sigmoid") return sigmoid();
        if (base == "tanh") return tanh();
        if (base == "softplus") return softplus();
        if (base == "softsign") return softsign();
        if (base == "logsigmoid") return logsigmoid();
        throw DomainError("unknown activation '" + text +
                          "'; valid: relu, prelu[:slope], gelu, silu, elu[:alpha], selu, "
                          "sigmoid, tanh, softplus, softsign, logsigmoid");
    }

    bool operator==(const ActivationKind& o) const {
        return kind_ == o.kind_ && param_ == o.param_;
    }

private:
    ActivationKind(Kind k, double p) : kind_(k), param_(p) {}

    static std::string format_param(double p) {
        std::ostringstream os;
        os << p;
        return os.str();
    }

    Kind kind_;
    double param_;
};

inline Matrix apply_activation(const ActivationKind& kind, const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = kind.f(z.data()[i]);
    return out;
}

inline Matrix apply_activation_derivative(const ActivationKind& kind, const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.size(); ++i) out.data()[i] = kind.df(z.data()[i]);
    return out;
}

} // namespace gnplan
