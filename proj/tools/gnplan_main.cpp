// gnplan: group-count planning and gradient-variance measurement for
// group-normalization layers.
//
// Exit codes: 0 success / within tolerance, 1 tolerance failure,
// 2 usage error, 3 I/O or format error.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gnplan/activation.hpp"
#include "gnplan/dataset.hpp"
#include "gnplan/errors.hpp"
#include "gnplan/planner.hpp"
#include "gnplan/probes.hpp"
#include "gnplan/trainer.hpp"
#include "gnplan/unit_block.hpp"
#include "gnplan/version.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitTolerance = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;

std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json make_manifest(const std::string& subcommand, json parameters) {
    return json{{"tool", "gnplan"},
                {"version", gnplan::kVersion},
                {"subcommand", subcommand},
                {"timestamp_utc", timestamp_utc()},
                {"parameters", std::move(parameters)}};
}

// Machine output goes to --out when given, otherwise replaces the table on
// stdout. Human tables never share a stream with machine formats.
void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out_path);
    if (!f) throw gnplan::FormatError(out_path + ": cannot open for writing");
    f << text;
}

std::string csv_with_manifest(const json& manifest, const std::string& header,
                              const std::string& rows) {
    // Manifest rides along as leading comment lines; the first non-comment
    // line is the documented header row.
    std::string text = "# manifest: " + manifest.dump() + "\n";
    text += header + "\n";
    text += rows;
    return text;
}

// ---------------------------------------------------------------------------
// plan

gnplan::LayerSpec parse_layer_spec(const std::string& text) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream is(text);
    while (std::getline(is, cur, ':')) parts.push_back(cur);
    // Activations may themselves carry ":param" (prelu:0.25), so re-join.
    if (parts.size() < 2) {
        throw gnplan::DomainError("layer spec '" + text + "': expected n_in:n_out[:activation]");
    }
    gnplan::LayerSpec spec;
    try {
        const long long n_in = std::stoll(parts[0]);
        const long long n_out = std::stoll(parts[1]);
        if (n_in <= 0 || n_out <= 0) throw std::invalid_argument("non-positive");
        spec.n_in = static_cast<std::size_t>(n_in);
        spec.n_out = static_cast<std::size_t>(n_out);
    } catch (const std::exception&) {
        throw gnplan::DomainError("layer spec '" + text + "': widths must be positive integers");
    }
    if (parts.size() > 2) {
        std::string act = parts[2];
        for (std::size_t i = 3; i < parts.size(); ++i) act += ":" + parts[i];
        spec.activation = gnplan::ActivationKind::parse(act);
    }
    return spec;
}

std::vector<gnplan::LayerSpec> parse_arch_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw gnplan::FormatError(path + ": cannot open");
    std::stringstream buffer;
    buffer << f.rdbuf();
    std::string content = buffer.str();
    const auto first = content.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw gnplan::FormatError(path + ": empty architecture file");

    std::vector<gnplan::LayerSpec> layers;
    if (content[first] == '[') {
        json doc;
        try {
            doc = json::parse(content);
        } catch (const json::exception& e) {
            throw gnplan::FormatError(path + ": invalid JSON: " + e.what());
        }
        for (const auto& item : doc) {
            gnplan::LayerSpec spec;
            spec.n_in = item.at("n_in").get<std::size_t>();
            spec.n_out = item.at("n_out").get<std::size_t>();
            if (item.contains("activation")) {
                spec.activation = gnplan::ActivationKind::parse(item["activation"].get<std::string>());
            }
            layers.push_back(spec);
        }
        return layers;
    }

    std::istringstream lines(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
        std::istringstream ls(line);
        std::string a, b, act;
        if (!(ls >> a)) continue; // blank
        if (!(ls >> b)) {
            throw gnplan::FormatError(path + ":" + std::to_string(lineno) +
                                      ": expected 'n_in n_out [activation]'");
        }
        ls >> act;
        layers.push_back(parse_layer_spec(act.empty() ? a + ":" + b : a + ":" + b + ":" + act));
    }
    if (layers.empty()) throw gnplan::FormatError(path + ": no layers found");
    return layers;
}

gnplan::GainTable load_gain_table(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw gnplan::FormatError(path + ": cannot open");
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw gnplan::FormatError(path + ": invalid JSON: " + std::string(e.what()));
    }
    gnplan::GainTable table;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        table[it.key()] = {it.value().at("forward").get<double>(),
                           it.value().at("backward").get<double>()};
    }
    return table;
}

int cmd_plan(const std::vector<std::string>& layer_args, const std::string& arch_file,
             const std::string& gains_file, const std::string& format, const std::string& out) {
    std::vector<gnplan::LayerSpec> layers;
    for (const auto& arg : layer_args) layers.push_back(parse_layer_spec(arg));
    if (!arch_file.empty()) {
        auto from_file = parse_arch_file(arch_file);
        layers.insert(layers.end(), from_file.begin(), from_file.end());
    }
    if (layers.empty()) {
        throw gnplan::DomainError("plan: no layers given (use --layer or --arch-file)");
    }
    std::optional<gnplan::GainTable> gains;
    if (!gains_file.empty()) gains = load_gain_table(gains_file);

    const gnplan::GroupPlan plan =
        gnplan::plan_architecture(layers, gains ? &*gains : nullptr);

    json params;
    params["layers"] = layer_args;
    params["arch_file"] = arch_file;
    params["gains_file"] = gains_file;
    const json manifest = make_manifest("plan", params);

    if (format == "json") {
        json out_doc;
        out_doc["manifest"] = manifest;
        out_doc["layers"] = json::array();
        for (const auto& lp : plan.layers) {
            out_doc["layers"].push_back(
                {{"n_in", lp.n_in},
                 {"n_out", lp.n_out},
                 {"activation", lp.activation},
                 {"gain_ratio", lp.gain_ratio},
                 {"g_ideal", lp.g_ideal},
                 {"g_clamped", lp.g_clamped},
                 {"g_practical", lp.g_practical},
                 {"k_at_practical", lp.k_at_practical},
                 {"g_k_criterion", lp.g_k_criterion},
                 {"case", gnplan::to_string(lp.case_label)},
                 {"criteria_agree", lp.criteria_agree},
                 {"gain_warning", lp.gain_warning}});
        }
        emit(out_doc.dump(2) + "\n", out);
        if (!out.empty()) std::cout << "wrote " << out << "\n";
        return kExitOk;
    }
    if (format == "csv") {
        std::string rows;
        for (const auto& lp : plan.layers) {
            char buf[256];
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%s,%.6g,%.6g,%zu,%.10g,%zu,%s,%d,%d\n",
                          lp.n_in, lp.n_out, lp.activation.c_str(), lp.g_ideal, lp.g_clamped,
                          lp.g_practical, lp.k_at_practical, lp.g_k_criterion,
                          gnplan::to_string(lp.case_label).c_str(), int(lp.criteria_agree),
                          int(lp.gain_warning));
            rows += buf;
        }
        emit(csv_with_manifest(manifest,
                               "n_in,n_out,activation,g_ideal,g_clamped,g_practical,"
                               "k_at_practical,g_k_criterion,case,criteria_agree,gain_warning",
                               rows),
             out);
        if (!out.empty()) std::cout << "wrote " << out << "\n";
        return kExitOk;
    }
    if (format != "table") {
        throw gnplan::DomainError("plan: unknown format '" + format + "' (table, json, csv)");
    }

    std::printf("%7s %7s %-12s %10s %10s %6s %10s %7s %-22s %s\n", "n_in", "n_out", "activation",
                "G_ideal", "G_clamped", "G", "K(G)", "G_by_K", "case", "note");
    for (const auto& lp : plan.layers) {
        std::string note;
        if (!lp.criteria_agree) note += "criteria-disagree ";
        if (lp.gain_warning) note += "needs-gain-table";
        std::printf("%7zu %7zu %-12s %10.3f %10.3f %6zu %10.6f %7zu %-22s %s\n", lp.n_in, lp.n_out,
                    lp.activation.c_str(), lp.g_ideal, lp.g_clamped, lp.g_practical,
                    lp.k_at_practical, lp.g_k_criterion, gnplan::to_string(lp.case_label).c_str(),
                    note.c_str());
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// probe

int cmd_probe(std::size_t n_in, std::size_t n_out, std::size_t groups, std::uint64_t trials,
              std::uint64_t seed, double weight_std, double tol, const std::string& format,
              const std::string& out) {
    gnplan::ProbeConfig cfg;
    cfg.n_in = n_in;
    cfg.n_out = n_out;
    cfg.groups = groups;
    cfg.trials = trials;
    cfg.seed = seed;
    cfg.weight_std = weight_std;
    const gnplan::VarianceReport report = gnplan::measure_variance_ratios(cfg);

    const gnplan::RatioEstimate* ratios[4] = {&report.eq_a, &report.eq_b, &report.eq_c,
                                              &report.eq_d};
    const char* names[4] = {"A", "B", "C", "D"};
    bool within = true;
    for (const auto* r : ratios) within = within && r->rel_error <= tol;

    json params{{"n_in", n_in},   {"n_out", n_out},           {"groups", groups},
                {"trials", trials}, {"seed", seed},           {"weight_std", weight_std},
                {"tol", tol}};
    const json manifest = make_manifest("probe", params);

    if (format == "json") {
        json doc;
        doc["manifest"] = manifest;
        doc["resampled_trials"] = report.resampled_trials;
        doc["within_tol"] = within;
        for (int i = 0; i < 4; ++i) {
            doc["results"][std::string("eq") + names[i]] = {
                {"empirical", ratios[i]->empirical},
                {"theoretical", ratios[i]->theoretical},
                {"rel_error", ratios[i]->rel_error}};
        }
        emit(doc.dump(2) + "\n", out);
        if (!out.empty()) std::cout << "wrote " << out << "\n";
    } else if (format == "csv") {
        std::string rows;
        for (int i = 0; i < 4; ++i) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%s,%.10g,%.10g,%.6g\n", names[i],
                          ratios[i]->empirical, ratios[i]->theoretical, ratios[i]->rel_error);
            rows += buf;
        }
        emit(csv_with_manifest(manifest, "eq,empirical,theoretical,rel_error", rows), out);
        if (!out.empty()) std::cout << "wrote " << out << "\n";
    } else if (format == "table") {
        std::printf("variance ratios: n_in=%zu n_out=%zu groups=%zu trials=%llu seed=%llu\n", n_in,
                    n_out, groups, (unsigned long long)trials, (unsigned long long)seed);
        if (report.resampled_trials > 0) {
            std::printf("(%llu degenerate trials resampled)\n",
                        (unsigned long long)report.resampled_trials);
        }
        std::printf("%4s %14s %14s %10s\n", "eq", "empirical", "theoretical", "rel_error");
        for (int i = 0; i < 4; ++i) {
            std::printf("%4s %14.6f %14.6f %9.2f%%\n", names[i], ratios[i]->empirical,
                        ratios[i]->theoretical, 100.0 * ratios[i]->rel_error);
        }
        std::printf("within tolerance (%.1f%%): %s\n", 100.0 * tol, within ? "yes" : "no");
    } else {
        throw gnplan::DomainError("probe: unknown format '" + format + "' (table, json, csv)");
    }
    return within ? kExitOk : kExitTolerance;
}

// ---------------------------------------------------------------------------
// gains

int cmd_gains(const std::string& activation_name, std::vector<double> sigmas,
              std::uint64_t samples, std::uint64_t seed, bool check_homogeneity, double tol,
              const std::string& format, const std::string& out) {
    const gnplan::ActivationKind activation = gnplan::ActivationKind::parse(activation_name);
    if (sigmas.empty()) sigmas = {1.0};
    for (double s : sigmas) {
        if (s <= 0.0) throw gnplan::DomainError("gains: sigma must be positive");
    }

    std::vector<std::pair<double, gnplan::GainReport>> results;
    std::optional<gnplan::HomogeneityReport> homo;
    if (check_homogeneity) {
        if (sigmas.size() < 2) {
            throw gnplan::DomainError("gains: --check-homogeneity needs at least two --sigma");
        }
        homo = gnplan::homogeneity_check(activation, sigmas, samples, seed, tol);
        results = homo->gains;
    } else {
        for (std::size_t i = 0; i < sigmas.size(); ++i) {
            gnplan::GainConfig cfg;
            cfg.activation = activation;
            cfg.sigma = sigmas[i];
            cfg.samples = samples;
            cfg.seed = seed + i;
            results.emplace_back(sigmas[i], gnplan::measure_activation_gains(cfg));
        }
    }

    json params{{"activation", activation.name()}, {"sigmas", sigmas},
                {"samples", samples},              {"seed", seed},
                {"check_homogeneity", check_homogeneity}, {"tol", tol}};
    const json manifest = make_manifest("gains", params);

    if (format == "json") {
        json doc;
        doc["manifest"] = manifest;
        doc["entries"] = json::array();
        for (const auto& [sigma, g] : results) {
            doc["entries"].push_back({{"sigma", sigma},
                                      {"forward_gain", g.forward_gain},
                                      {"backward_gain", g.backward_gain},
                                      {"ratio", g.ratio()}});
        }
        if (activation.kind() == gnplan::ActivationKind::Kind::PReLU) {
            doc["closed_form"] = gnplan::prelu_gain_closed_form(activation.param());
        }
        if (homo) {
            doc["homogeneity"] = {{"homogeneous", homo->homogeneous},
                                  {"max_forward_dev", homo->max_forward_dev},
                                  {"max_backward_dev", homo->max_backward_dev}};
        }
        emit(doc.dump(2) + "\n", out);
        if (!out.empty()) std::cout << "wrote " << out << "\n";
    } else if (format == "csv") {
        std::string rows;
        for (const auto& [sigma, g] : results) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s,%.6g,%.8g,%.8g,%.8g\n", activation.name().c_str(),
                          sigma, g.forward_gain, g.backward_gain, g.ratio());
            rows += buf;
        }
        emit(csv_with_manifest(manifest, "activation,sigma,forward_gain,backward_gain,ratio", rows),
             out);
        if (!out.empty()) std::cout << "wrote " << out << "\n";
    } else if (format == "table") {
        std::printf("activation gains: %s, %llu samples, seed %llu\n", activation.name().c_str(),
                    (unsigned long long)samples, (unsigned long long)seed);
        std::printf("%10s %12s %12s %10s\n", "sigma", "F", "B", "B/F");
        for (const auto& [sigma, g] : results) {
            std::printf("%10.3f %12.6f %12.6f %10.6f\n", sigma, g.forward_gain, g.backward_gain,
                        g.ratio());
        }
        if (activation.kind() == gnplan::ActivationKind::Kind::PReLU) {
            std::printf("closed form (1+a^2)/2 = %.6f\n",
                        gnplan::prelu_gain_closed_form(activation.param()));
        }
        if (homo) {
            std::printf("homogeneity within %.2f%%: %s (max dev F %.3f%%, B %.3f%%)\n", 100.0 * tol,
                        homo->homogeneous ? "yes" : "no", 100.0 * homo->max_forward_dev,
                        100.0 * homo->max_backward_dev);
        }
    } else {
        throw gnplan::DomainError("gains: unknown format '" + format + "' (table, json, csv)");
    }
    if (homo) return homo->homogeneous ? kExitOk : kExitTolerance;
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int cmd_gradcheck(std::uint64_t seed, double h, std::size_t configs, std::size_t n_in,
                  std::size_t n_out, std::size_t groups, double threshold,
                  const std::string& out) {
    struct Dims {
        std::size_t n_in, n_out, groups;
    };
    std::vector<Dims> matrix;
    if (n_in || n_out || groups) {
        if (!(n_in && n_out && groups)) {
            throw gnplan::DomainError("gradcheck: give all of --n-in, --n-out, --groups or none");
        }
        matrix.push_back({n_in, n_out, groups});
    } else {
        matrix = {{6, 4, 1}, {8, 6, 2}, {9, 6, 1}, {12, 8, 2}, {16, 12, 4}, {5, 9, 3}, {10, 12, 3}};
    }
    const gnplan::ActivationKind acts[] = {
        gnplan::ActivationKind::tanh(), gnplan::ActivationKind::gelu(),
        gnplan::ActivationKind::silu(), gnplan::ActivationKind::sigmoid(),
        gnplan::ActivationKind::softplus(), gnplan::ActivationKind::prelu(0.25)};

    std::printf("gradient check: h=%g, seed=%llu, threshold=%g\n", h, (unsigned long long)seed,
                threshold);
    json entries = json::array();
    double worst = 0.0;
    std::size_t ran = 0;
    for (const auto& dims : matrix) {
        if (dims.n_out / dims.groups < 2) {
            std::printf("  n_in=%zu n_out=%zu groups=%zu: skipped (degenerate: group size 1 "
                        "with eps=0)\n",
                        dims.n_in, dims.n_out, dims.groups);
            entries.push_back({{"n_in", dims.n_in},
                               {"n_out", dims.n_out},
                               {"groups", dims.groups},
                               {"skipped", "degenerate group size 1"}});
            continue;
        }
        for (std::size_t k = 0; k < configs; ++k) {
            const auto& act = acts[(ran + k) % std::size(acts)];
            gnplan::RngStream rs(seed, ran * 131 + k);
            gnplan::Matrix w = gnplan::sample_normal(rs, 0.0, 1.0, dims.n_in, dims.n_out);
            gnplan::UnitBlockParams params(dims.n_in, dims.n_out, dims.groups, std::move(w), act);
            gnplan::Matrix x = gnplan::sample_normal(rs, 0.0, 1.0, 2, dims.n_in);
            gnplan::Matrix lw = gnplan::sample_normal(rs, 0.0, 1.0, 2, dims.n_out);
            const double err = gnplan::finite_diff_check(params, x, lw, h);
            worst = std::max(worst, err);
            std::printf("  n_in=%zu n_out=%zu groups=%zu act=%-10s max_rel_err=%.3e\n", dims.n_in,
                        dims.n_out, dims.groups, act.name().c_str(), err);
            entries.push_back({{"n_in", dims.n_in},
                               {"n_out", dims.n_out},
                               {"groups", dims.groups},
                               {"activation", act.name()},
                               {"max_rel_err", err}});
        }
        ++ran;
    }
    const bool passed = worst < threshold;
    std::printf("worst: %.3e (%s %g)\n", worst, passed ? "<" : ">=", threshold);
    if (!out.empty()) {
        json params{{"seed", seed},   {"h", h},
                    {"configs", configs}, {"threshold", threshold},
                    {"n_in", n_in},   {"n_out", n_out},
                    {"groups", groups}};
        json doc;
        doc["manifest"] = make_manifest("gradcheck", params);
        doc["checks"] = entries;
        doc["worst"] = worst;
        doc["passed"] = passed;
        emit(doc.dump(2) + "\n", out);
        std::cout << "wrote " << out << "\n";
    }
    return passed ? kExitOk : kExitTolerance;
}

// ---------------------------------------------------------------------------
// train

struct DataSpec {
    std::string kind; // "idx" or "synth"
    std::string images, labels;
    int classes = 10;
    std::size_t per_class = 200;
    std::size_t test_per_class = 50;
    std::size_t dim = 784;
    double separation = 4.0;
    std::uint64_t seed = 42;
};

DataSpec parse_data_spec(const std::string& text) {
    DataSpec spec;
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw gnplan::DomainError("data spec '" + text + "': expected idx:<images>,<labels> or "
                                  "synth:key=value,...");
    }
    spec.kind = text.substr(0, colon);
    const std::string rest = text.substr(colon + 1);
    if (spec.kind == "idx") {
        const auto comma = rest.find(',');
        if (comma == std::string::npos) {
            throw gnplan::DomainError("data spec '" + text + "': expected idx:<images>,<labels>");
        }
        spec.images = rest.substr(0, comma);
        spec.labels = rest.substr(comma + 1);
        return spec;
    }
    if (spec.kind == "synth") {
        std::istringstream is(rest);
        std::string kv;
        while (std::getline(is, kv, ',')) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw gnplan::DomainError("synth spec: bad key=value '" + kv + "'");
            }
            const std::string key = kv.substr(0, eq);
            const std::string val = kv.substr(eq + 1);
            try {
                if (key == "classes") spec.classes = std::stoi(val);
                else if (key == "per_class") spec.per_class = std::stoull(val);
                else if (key == "test_per_class") spec.test_per_class = std::stoull(val);
                else if (key == "d") spec.dim = std::stoull(val);
                else if (key == "sep") spec.separation = std::stod(val);
                else if (key == "seed") spec.seed = std::stoull(val);
                else throw gnplan::DomainError("synth spec: unknown key '" + key + "'");
            } catch (const gnplan::DomainError&) {
                throw;
            } catch (const std::exception&) {
                throw gnplan::DomainError("synth spec: bad value for '" + key + "'");
            }
        }
        return spec;
    }
    throw gnplan::DomainError("data spec '" + text + "': unknown kind '" + spec.kind + "'");
}

void write_epoch_csv(const std::string& path, const gnplan::TrainReport& report) {
    std::ofstream f(path);
    if (!f) throw gnplan::FormatError(path + ": cannot open for writing");
    f << "epoch,train_loss,test_error_pct\n";
    for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%zu,%.8g,%.4f\n", e + 1, report.epochs[e].train_loss,
                      report.epochs[e].test_error_pct);
        f << buf;
    }
}

json report_to_json(const gnplan::TrainReport& r) {
    json epochs = json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"train_loss", e.train_loss}, {"test_error_pct", e.test_error_pct}});
    }
    return json{{"seed", r.config.seed},
                {"groups", r.groups},
                {"final_test_error_pct", r.final_test_error_pct},
                {"diverged", r.diverged},
                {"epochs", epochs}};
}

int cmd_train(const std::string& data_arg, const std::string& test_data_arg,
              std::vector<std::size_t> hidden, const std::string& groups_arg,
              const std::string& activation_name, gnplan::TrainConfig cfg,
              const std::string& sweep_arg, std::size_t runs, const std::string& out_prefix) {
    const DataSpec spec = parse_data_spec(data_arg);
    gnplan::Dataset train, test;
    if (spec.kind == "idx") {
        train = gnplan::load_idx(spec.images, spec.labels);
        if (test_data_arg.empty()) {
            throw gnplan::DomainError("train: idx data needs --test-data idx:<images>,<labels>");
        }
        const DataSpec test_spec = parse_data_spec(test_data_arg);
        if (test_spec.kind != "idx") {
            throw gnplan::DomainError("train: --test-data must be idx:<images>,<labels>");
        }
        test = gnplan::load_idx(test_spec.images, test_spec.labels);
    } else {
        // Same class centers (same seed), disjoint sample streams.
        train = gnplan::synth_dataset(spec.classes, spec.per_class, spec.dim, spec.separation,
                                      spec.seed, 1);
        test = gnplan::synth_dataset(spec.classes, spec.test_per_class, spec.dim, spec.separation,
                                     spec.seed, 2);
    }

    const gnplan::ActivationKind activation = gnplan::ActivationKind::parse(activation_name);
    const std::size_t input_dim = train.features.cols();

    json params{{"data", data_arg},
                {"test_data", test_data_arg},
                {"hidden", hidden},
                {"groups", groups_arg},
                {"activation", activation.name()},
                {"learning_rate", cfg.learning_rate},
                {"momentum", cfg.momentum},
                {"batch_size", cfg.batch_size},
                {"epochs", cfg.epochs},
                {"seed", cfg.seed},
                {"init", gnplan::to_string(cfg.init)},
                {"eps", cfg.eps},
                {"sweep", sweep_arg},
                {"runs", runs}};
    const json manifest = make_manifest("train", params);

    json summary;
    summary["manifest"] = manifest;
    summary["classes"] = train.classes;
    summary["input_dim"] = input_dim;

    if (!sweep_arg.empty()) {
        if (hidden.size() != 1) {
            throw gnplan::DomainError("train: --sweep needs exactly one hidden layer");
        }
        std::vector<std::size_t> values;
        std::istringstream is(sweep_arg);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            try {
                values.push_back(std::stoull(tok));
            } catch (const std::exception&) {
                throw gnplan::DomainError("train: bad sweep value '" + tok + "'");
            }
        }
        gnplan::SweepConfig sweep_cfg;
        sweep_cfg.input_dim = input_dim;
        sweep_cfg.hidden_width = hidden[0];
        sweep_cfg.classes = train.classes;
        sweep_cfg.activation = activation;
        sweep_cfg.train = cfg;
        const auto entries = gnplan::sweep_groups(values, sweep_cfg, train, test, runs);

        std::printf("%8s %10s  per-run error %%\n", "groups", "mean err%");
        summary["sweep"] = json::array();
        for (const auto& entry : entries) {
            std::printf("%8zu %10.3f  ", entry.groups, entry.mean_error);
            for (double e : entry.run_errors) std::printf("%.3f ", e);
            std::printf("\n");
            json entry_json{{"groups", entry.groups},
                            {"mean_error_pct", entry.mean_error},
                            {"run_errors_pct", entry.run_errors}};
            summary["sweep"].push_back(entry_json);
            for (std::size_t r = 0; r < entry.reports.size(); ++r) {
                write_epoch_csv(out_prefix + "_g" + std::to_string(entry.groups) + "_run" +
                                    std::to_string(r) + ".csv",
                                entry.reports[r]);
            }
        }
        std::ofstream jf(out_prefix + ".json");
        if (!jf) throw gnplan::FormatError(out_prefix + ".json: cannot open for writing");
        jf << summary.dump(2) << "\n";
        std::printf("wrote %s.json and per-run CSVs\n", out_prefix.c_str());
        return kExitOk;
    }

    // Single training run: resolve per-layer groups.
    std::vector<gnplan::HiddenSpec> hidden_specs;
    std::vector<std::string> group_tokens;
    {
        std::istringstream is(groups_arg);
        std::string tok;
        while (std::getline(is, tok, ',')) group_tokens.push_back(tok);
    }
    if (group_tokens.size() != 1 && group_tokens.size() != hidden.size()) {
        throw gnplan::DomainError("train: --groups needs one value or one per hidden layer");
    }
    std::size_t in_width = input_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        const std::string& tok = group_tokens.size() == 1 ? group_tokens[0] : group_tokens[i];
        std::size_t g;
        if (tok == "practical") {
            g = gnplan::practical_groups(in_width, hidden[i]).first;
        } else {
            try {
                g = std::stoull(tok);
            } catch (const std::exception&) {
                throw gnplan::DomainError("train: bad groups value '" + tok + "'");
            }
            if (g == 0 || hidden[i] % g != 0) {
                throw gnplan::DomainError("train: groups " + tok + " does not divide hidden width " +
                                          std::to_string(hidden[i]));
            }
        }
        hidden_specs.push_back({hidden[i], g});
        in_width = hidden[i];
    }

    gnplan::MlpModel model =
        gnplan::make_mlp(input_dim, hidden_specs, train.classes, activation, cfg.init, cfg.eps,
                         gnplan::RngStream(cfg.seed, 0));
    const gnplan::TrainReport report = gnplan::train_mlp(model, train, test, cfg);

    std::printf("%5s %12s %12s\n", "epoch", "train_loss", "test_err%");
    for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        std::printf("%5zu %12.6f %12.3f\n", e + 1, report.epochs[e].train_loss,
                    report.epochs[e].test_error_pct);
    }
    if (report.diverged) std::printf("training diverged (non-finite loss)\n");
    std::printf("final test error: %.3f%%\n", report.final_test_error_pct);

    write_epoch_csv(out_prefix + ".csv", report);
    summary["result"] = report_to_json(report);
    json groups_json = json::array();
    for (const auto& hs : hidden_specs) {
        groups_json.push_back({{"width", hs.width}, {"groups", hs.groups}});
    }
    summary["hidden"] = groups_json;
    std::ofstream jf(out_prefix + ".json");
    if (!jf) throw gnplan::FormatError(out_prefix + ".json: cannot open for writing");
    jf << summary.dump(2) << "\n";
    std::printf("wrote %s.csv and %s.json\n", out_prefix.c_str(), out_prefix.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"group-count planning and gradient measurements for group normalization"};
    app.set_version_flag("--version", gnplan::kVersion);
    app.require_subcommand(1);

    // plan
    auto* plan = app.add_subcommand("plan", "per-layer group counts from architecture widths");
    std::vector<std::string> plan_layers;
    std::string plan_arch_file, plan_gains_file, plan_format = "table", plan_out;
    plan->add_option("--layer", plan_layers, "layer as n_in:n_out[:activation] (repeatable)");
    plan->add_option("--arch-file", plan_arch_file,
                     "architecture file: 'n_in n_out [activation]' per line, or a JSON array");
    plan->add_option("--gains-file", plan_gains_file,
                     "JSON activation gain table {name: {forward, backward}}");
    plan->add_option("--format", plan_format, "table|json|csv")->capture_default_str();
    plan->add_option("--out", plan_out, "write machine format to this file");

    // probe
    auto* probe = app.add_subcommand("probe", "measure backward variance ratios of a unit block");
    std::size_t probe_n_in = 0, probe_n_out = 0, probe_groups = 0;
    std::uint64_t probe_trials = 10000, probe_seed = 42;
    double probe_weight_std = 1.0, probe_tol = 0.05;
    std::string probe_format = "table", probe_out;
    probe->add_option("--n-in", probe_n_in, "input width")->required();
    probe->add_option("--n-out", probe_n_out, "output width")->required();
    probe->add_option("--groups", probe_groups, "group count (must divide n-out)")->required();
    probe->add_option("--trials", probe_trials, "Monte-Carlo trials")->capture_default_str();
    probe->add_option("--seed", probe_seed, "RNG seed")->capture_default_str();
    probe->add_option("--weight-std", probe_weight_std, "weight std")->capture_default_str();
    probe->add_option("--tol", probe_tol, "relative tolerance for exit status")
        ->capture_default_str();
    probe->add_option("--format", probe_format, "table|json|csv")->capture_default_str();
    probe->add_option("--out", probe_out, "write machine format to this file");

    // gains
    auto* gains = app.add_subcommand("gains", "measure forward/backward activation gains");
    std::string gains_activation;
    std::vector<double> gains_sigmas;
    std::uint64_t gains_samples = 1000000, gains_seed = 42;
    bool gains_homo = false;
    double gains_tol = 0.015;
    std::string gains_format = "table", gains_out;
    gains->add_option("--activation", gains_activation, "activation name, e.g. relu, prelu:0.25")
        ->required();
    gains->add_option("--sigma", gains_sigmas, "input std (repeatable; default 1.0)");
    gains->add_option("--samples", gains_samples, "Monte-Carlo samples")->capture_default_str();
    gains->add_option("--seed", gains_seed, "RNG seed")->capture_default_str();
    gains->add_flag("--check-homogeneity", gains_homo,
                    "verify the gains are scale-invariant across the given sigmas");
    gains->add_option("--tol", gains_tol, "homogeneity tolerance (relative)")
        ->capture_default_str();
    gains->add_option("--format", gains_format, "table|json|csv")->capture_default_str();
    gains->add_option("--out", gains_out, "write machine format to this file");

    // gradcheck
    auto* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of the analytic backward pass");
    gradcheck->set_help_flag("--help", "print help"); // frees -h so --h is the step size
    std::uint64_t gc_seed = 42;
    double gc_h = 1e-5, gc_threshold = 1e-5;
    std::size_t gc_configs = 3, gc_n_in = 0, gc_n_out = 0, gc_groups = 0;
    gradcheck->add_option("--seed", gc_seed, "RNG seed")->capture_default_str();
    gradcheck->add_option("--h", gc_h, "finite-difference step")->capture_default_str();
    gradcheck->add_option("--configs", gc_configs, "random configs per dimension set")
        ->capture_default_str();
    gradcheck->add_option("--n-in", gc_n_in, "custom input width");
    gradcheck->add_option("--n-out", gc_n_out, "custom output width");
    gradcheck->add_option("--groups", gc_groups, "custom group count");
    gradcheck->add_option("--threshold", gc_threshold, "pass/fail threshold")
        ->capture_default_str();
    std::string gc_out;
    gradcheck->add_option("--out", gc_out, "write a JSON report to this file");

    // train
    auto* train = app.add_subcommand("train", "train a group-normalized MLP classifier");
    std::string train_data, train_test_data, train_groups = "practical";
    std::string train_activation = "relu", train_sweep, train_out_prefix = "train_report";
    std::string train_init = "fan_in_scaled";
    std::vector<std::size_t> train_hidden = {512};
    gnplan::TrainConfig train_cfg;
    std::size_t train_runs = 3;
    train->add_option("--data", train_data,
                      "idx:<images>,<labels> or synth:classes=10,per_class=200,d=784,sep=4.0")
        ->required();
    train->add_option("--test-data", train_test_data, "idx:<images>,<labels> (idx data only)");
    train->add_option("--hidden", train_hidden, "hidden widths (repeatable)")
        ->capture_default_str();
    train->add_option("--groups", train_groups,
                      "groups per hidden layer: integer, comma list, or 'practical'")
        ->capture_default_str();
    train->add_option("--activation", train_activation, "hidden activation")->capture_default_str();
    train->add_option("--lr", train_cfg.learning_rate, "learning rate")->capture_default_str();
    train->add_option("--momentum", train_cfg.momentum, "SGD momentum")->capture_default_str();
    train->add_option("--batch-size", train_cfg.batch_size, "mini-batch size")
        ->capture_default_str();
    train->add_option("--epochs", train_cfg.epochs, "training epochs")->capture_default_str();
    train->add_option("--seed", train_cfg.seed, "base RNG seed")->capture_default_str();
    train->add_option("--init", train_init, "weight init rule: unit|fan_in_scaled")
        ->capture_default_str();
    train->add_option("--eps", train_cfg.eps, "normalization eps")->capture_default_str();
    train->add_option("--sweep", train_sweep, "comma list of group counts to sweep");
    train->add_option("--runs", train_runs, "runs per sweep value")->capture_default_str();
    train->add_option("--out-prefix", train_out_prefix, "report file prefix")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (plan->parsed()) {
            return cmd_plan(plan_layers, plan_arch_file, plan_gains_file, plan_format, plan_out);
        }
        if (probe->parsed()) {
            return cmd_probe(probe_n_in, probe_n_out, probe_groups, probe_trials, probe_seed,
                             probe_weight_std, probe_tol, probe_format, probe_out);
        }
        if (gains->parsed()) {
            return cmd_gains(gains_activation, gains_sigmas, gains_samples, gains_seed, gains_homo,
                             gains_tol, gains_format, gains_out);
        }
        if (gradcheck->parsed()) {
            return cmd_gradcheck(gc_seed, gc_h, gc_configs, gc_n_in, gc_n_out, gc_groups,
                                 gc_threshold, gc_out);
        }
        if (train->parsed()) {
            train_cfg.init = gnplan::parse_init_rule(train_init);
            return cmd_train(train_data, train_test_data, train_hidden, train_groups,
                             train_activation, train_cfg, train_sweep, train_runs,
                             train_out_prefix);
        }
    } catch (const gnplan::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const gnplan::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
