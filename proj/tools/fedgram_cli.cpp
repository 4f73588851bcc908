// Command-line driver: validate configs, run one experiment, or sweep one axis.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedgram/config.hpp"
#include "fedgram/report.hpp"
#include "fedgram/simulation.hpp"

namespace fs = std::filesystem;
using fedgram::Json;

namespace {

constexpr int kOk = 0;
constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

/// Thrown for problems the user must fix in their input (exit code 2).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw UsageError("cannot open " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const auto text = buf.str();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        return Json::object();
    }
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw UsageError(path + ": " + e.what());
    }
}

fedgram::ExperimentConfig checked_config(const Json& j, const std::string& origin) {
    auto parsed = fedgram::parse_config(j);
    if (!parsed.ok()) {
        std::string msg = origin + ": invalid config";
        for (const auto& v : parsed.violations) {
            msg += "\n  - " + v;
        }
        throw UsageError(msg);
    }
    return parsed.config;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw fedgram::Error("cannot write " + path.string());
    }
    out << text;
}

/// Runs one experiment into `out_dir` and returns its summary.
fedgram::RunSummary run_into(const fedgram::ExperimentConfig& cfg, const fs::path& out_dir,
                             const std::string& config_path) {
    fs::create_directories(out_dir);
    const auto resolved = fedgram::to_json(cfg);
    Json manifest{{"artifact_version", fedgram::kVersion},
                  {"config_path", config_path},
                  {"config", resolved},
                  {"config_hash", fedgram::hex64(fedgram::fnv1a64(resolved.dump()))},
                  {"seed", cfg.seed},
                  {"outputs", {{"metrics", "metrics.csv"}, {"summary", "summary.json"}}},
                  {"started_at", utc_now()},
                  {"finished_at", nullptr}};
    write_text(out_dir / "manifest.json", fedgram::dump_json(manifest));

    std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
    if (!csv) {
        throw fedgram::Error("cannot write " + (out_dir / "metrics.csv").string());
    }
    csv << fedgram::kCsvHeader << '\n';
    const auto records = fedgram::run_experiment(cfg, [&](const fedgram::RoundRecord& r) {
        csv << fedgram::csv_row(r) << '\n';
    });
    csv.close();

    const auto summary = fedgram::summarize(records);
    write_text(out_dir / "summary.json", fedgram::dump_json(fedgram::to_json(summary)));
    manifest["finished_at"] = utc_now();
    write_text(out_dir / "manifest.json", fedgram::dump_json(manifest));
    return summary;
}

int cmd_validate(const std::string& path) {
    const auto parsed = fedgram::parse_config(read_json_file(path));
    if (parsed.ok()) {
        std::cout << path << ": valid\n";
        return kOk;
    }
    std::cout << path << ": " << parsed.violations.size() << " violation(s)\n";
    for (const auto& v : parsed.violations) {
        std::cout << "  - " << v << '\n';
    }
    return kUsageError;
}

int cmd_run(const std::string& path, const std::string& out_dir, std::optional<std::uint64_t> seed) {
    auto j = read_json_file(path);
    if (seed) {
        j["seed"] = *seed;
    }
    const auto cfg = checked_config(j, path);
    const auto summary = run_into(cfg, out_dir, path);
    std::cout << "best_acc " << fedgram::format_g6(summary.best_accuracy) << " final_acc "
              << fedgram::format_g6(summary.final_accuracy) << " -> " << out_dir << '\n';
    return kOk;
}

/// Where each sweep axis lives in the config tree, and whether it is numeric.
struct AxisTarget {
    std::vector<std::string> path;
    bool numeric;
};

AxisTarget axis_target(const std::string& axis) {
    if (axis == "beta") return {{"partition", "beta"}, true};
    if (axis == "C") return {{"defense", "C"}, true};
    if (axis == "coverage") return {{"aux_coverage"}, true};
    if (axis == "malicious_fraction") return {{"malicious_fraction"}, true};
    if (axis == "defense") return {{"defense", "kind"}, false};
    if (axis == "attack") return {{"attack", "kind"}, false};
    throw UsageError("unknown sweep axis " + axis);
}

int cmd_sweep(const std::string& path, const std::string& axis, const std::vector<std::string>& values,
              const std::string& out_dir) {
    if (values.empty()) {
        throw UsageError("sweep needs at least one value");
    }
    const auto target = axis_target(axis);
    const auto base = read_json_file(path);

    std::vector<fedgram::ExperimentConfig> configs;
    for (const auto& value : values) {
        Json j = base;
        Json* node = &j;
        for (std::size_t i = 0; i + 1 < target.path.size(); ++i) {
            node = &(*node)[target.path[i]];
        }
        if (target.numeric) {
            std::size_t used = 0;
            double x = 0.0;
            try {
                x = std::stod(value, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != value.size()) {
                throw UsageError("sweep value \"" + value + "\" is not a number");
            }
            (*node)[target.path.back()] = x;
        } else {
            (*node)[target.path.back()] = value;
        }
        configs.push_back(checked_config(j, path + " [" + axis + "=" + value + "]"));
    }

    fs::create_directories(out_dir);
    std::ostringstream table;
    table << axis << ",best_acc,final_acc,mean_detect_precision,mean_detect_recall,mean_malicious_rank_fraction\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
        const auto dir = fs::path(out_dir) / (axis + "=" + values[i]);
        const auto s = run_into(configs[i], dir, path);
        table << values[i] << ',' << fedgram::format_g6(s.best_accuracy) << ','
              << fedgram::format_g6(s.final_accuracy) << ',' << fedgram::format_optional(s.mean_precision) << ','
              << fedgram::format_optional(s.mean_recall) << ',' << fedgram::format_optional(s.mean_rank_fraction)
              << '\n';
        std::cout << axis << '=' << values[i] << " best_acc " << fedgram::format_g6(s.best_accuracy) << '\n';
    }
    write_text(fs::path(out_dir) / "sweep_summary.csv", table.str());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FedGraM robustness lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string axis;
    std::vector<std::string> values;

    auto* validate = app.add_subcommand("validate", "Check a config file");
    validate->add_option("config", config_path, "JSON config")->required();

    auto* run = app.add_subcommand("run", "Run one experiment");
    run->add_option("config", config_path, "JSON config")->required();
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option("--seed", seed, "Override the config seed");

    auto* sweep = app.add_subcommand("sweep", "Run one experiment per value of an axis");
    sweep->add_option("config", config_path, "JSON config")->required();
    sweep->add_option("--axis", axis, "beta | C | coverage | malicious_fraction | defense | attack")->required();
    sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
    sweep->add_option("--out", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*validate) return cmd_validate(config_path);
        if (*run) return cmd_run(config_path, out_dir, seed);
        if (*sweep) return cmd_sweep(config_path, axis, values, out_dir);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
    return kUsageError;
}
