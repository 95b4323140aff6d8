// seridst: cross-domain DST evaluation driver.
//
//   seridst run --corpus dialogues.jsonl --target attraction --backend mock --mock-script s.jsonl --output out/
//   seridst ablate --config base.json --domains attraction,hotel
//   seridst verify out/
//
// Exit codes: 0 ok, 1 config/input error, 2 backend failure, 3 verification mismatch.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seridst/backends.hpp"
#include "seridst/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace seridst;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitBackend = 2;
constexpr int kExitMismatch = 3;

/// Flag values as parsed; only flags the user actually passed are applied.
struct FlagValues {
    std::string config_file;
    std::string corpus, format, split, pool_split, target, method, backend, cache, mock_script, output, model,
        descriptions, label;
    std::size_t k = 0, m = 0, limit = 0, prompt_budget = 0;
    std::uint64_t seed = 0;
    int retries = 0, workers = 0, max_tokens = 0, max_in_flight = 0, min_interval_ms = 0;
    double temperature = 0, k1 = 0, b = 0;
    bool active_only = false;
};

struct RunOptions {
    FlagValues v;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters;
};

template <typename T>
void flag(CLI::App& app, RunOptions& o, const std::string& name, T& slot, const std::string& help,
          std::function<void(RunConfig&)> apply) {
    o.setters.emplace_back(app.add_option(name, slot, help), std::move(apply));
}

void add_run_options(CLI::App& app, RunOptions& o) {
    auto& v = o.v;
    app.add_option("--config", v.config_file, "JSON config file; flags override its values")->check(CLI::ExistingFile);
    flag(app, o, "--corpus", v.corpus, "Corpus path", [&v](RunConfig& c) { c.corpus_path = v.corpus; });
    flag(app, o, "--format", v.format, "multiwoz-2.1 or jsonl-simple", [&v](RunConfig& c) { c.corpus_format = v.format; });
    flag(app, o, "--split", v.split, "Split to evaluate (MultiWOZ; default test)", [&v](RunConfig& c) { c.test_split = v.split; });
    flag(app, o, "--pool-split", v.pool_split, "Split the example pool comes from (default train)",
         [&v](RunConfig& c) { c.pool_split = v.pool_split; });
    flag(app, o, "--target", v.target, "Target domain", [&v](RunConfig& c) { c.target_domain = v.target; });
    flag(app, o, "--k", v.k, "BM25 candidates per instance (default 20)", [&v](RunConfig& c) { c.k = v.k; });
    flag(app, o, "--m", v.m, "Examples in the DST prompt (default 3)", [&v](RunConfig& c) { c.m = v.m; });
    flag(app, o, "--method", v.method, "self, self_no_explain or random",
         [&v](RunConfig& c) { c.method = parse_retrieval_method(v.method); });
    flag(app, o, "--seed", v.seed, "Seed for random retrieval", [&v](RunConfig& c) { c.seed = v.seed; });
    flag(app, o, "--bm25-k1", v.k1, "BM25 k1 (default 1.5)", [&v](RunConfig& c) { c.bm25.k1 = v.k1; });
    flag(app, o, "--bm25-b", v.b, "BM25 b (default 0.75)", [&v](RunConfig& c) { c.bm25.b = v.b; });
    flag(app, o, "--backend", v.backend, "live, mock or cache-only",
         [&v](RunConfig& c) { c.backend = parse_backend_mode(v.backend); });
    flag(app, o, "--cache", v.cache, "Response cache ledger (JSONL)", [&v](RunConfig& c) { c.cache_path = v.cache; });
    flag(app, o, "--mock-script", v.mock_script, "Scripted responses for the mock backend",
         [&v](RunConfig& c) { c.mock_script = v.mock_script; });
    flag(app, o, "--model", v.model, "Model id sent to the endpoint", [&v](RunConfig& c) { c.completion.model_id = v.model; });
    flag(app, o, "--temperature", v.temperature, "Sampling temperature (default 0)",
         [&v](RunConfig& c) { c.completion.temperature = v.temperature; });
    flag(app, o, "--max-tokens", v.max_tokens, "Max output tokens per completion",
         [&v](RunConfig& c) { c.completion.max_output_tokens = v.max_tokens; });
    flag(app, o, "--retries", v.retries, "Re-asks after an unparseable reply (default 2)",
         [&v](RunConfig& c) { c.retries = v.retries; });
    flag(app, o, "--prompt-budget", v.prompt_budget, "Approximate prompt token budget, 0 for none",
         [&v](RunConfig& c) { c.prompt_budget = v.prompt_budget; });
    flag(app, o, "--max-in-flight", v.max_in_flight, "Concurrent live requests",
         [&v](RunConfig& c) { c.max_in_flight = v.max_in_flight; });
    flag(app, o, "--min-interval-ms", v.min_interval_ms, "Minimum spacing of live requests",
         [&v](RunConfig& c) { c.min_interval_ms = v.min_interval_ms; });
    flag(app, o, "--descriptions", v.descriptions, "Slot description file (default: built in)",
         [&v](RunConfig& c) { c.slot_descriptions = v.descriptions; });
    flag(app, o, "--output", v.output, "Output directory", [&v](RunConfig& c) { c.output_dir = v.output; });
    flag(app, o, "--limit", v.limit, "Process at most this many test instances", [&v](RunConfig& c) { c.limit = v.limit; });
    flag(app, o, "--workers", v.workers, "Worker threads (default 1)", [&v](RunConfig& c) { c.workers = v.workers; });
    flag(app, o, "--label", v.label, "Run label used in tables", [&v](RunConfig& c) { c.label = v.label; });
    auto* active = app.add_flag("--active-turns-only", v.active_only,
                                "Judge only turns where the target domain is already in the gold state");
    o.setters.emplace_back(active, [&v](RunConfig& c) { c.active_turns_only = v.active_only; });
}

RunConfig resolve_config(const RunOptions& o) {
    RunConfig c;
    if (!o.v.config_file.empty()) {
        std::ifstream in(o.v.config_file);
        try {
            c.merge_json(json::parse(in));
        } catch (const json::parse_error& e) {
            throw ConfigError("config file " + o.v.config_file + ": " + e.what());
        }
    }
    for (const auto& [opt, apply] : o.setters)
        if (opt->count() > 0) apply(c);
    return c;
}

std::vector<std::string> parse_domains(const std::string& list) {
    std::vector<std::string> out;
    for (auto part : text::split(list, ',')) {
        auto d = std::string(text::trim(part));
        if (d.empty()) continue;
        require_known_domain(d);
        out.push_back(d);
    }
    if (out.empty()) throw ConfigError("no domains given");
    return out;
}

void write_cache_stats(const BackendStack& stack, const fs::path& dir) {
    if (auto stats = stack.cache_stats()) write_text(dir / "cache_stats.json", to_json(*stats).dump(2) + "\n");
}

std::pair<std::string, int> classify(const std::exception& e) {
    if (auto* be = dynamic_cast<const BackendError*>(&e)) return {std::string("backend_") + to_string(be->kind()), kExitBackend};
    if (dynamic_cast<const MockMiss*>(&e)) return {"mock_miss", kExitBackend};
    if (dynamic_cast<const ConfigError*>(&e)) return {"config", kExitConfig};
    if (dynamic_cast<const UnknownDomain*>(&e)) return {"unknown_domain", kExitConfig};
    if (dynamic_cast<const EmptySelection*>(&e)) return {"empty_selection", kExitConfig};
    if (dynamic_cast<const IoError*>(&e)) return {"io", kExitConfig};
    if (dynamic_cast<const ValidationError*>(&e)) return {"validation", kExitConfig};
    if (dynamic_cast<const SchemaError*>(&e)) return {"schema", kExitConfig};
    if (dynamic_cast<const MissingArtifacts*>(&e)) return {"missing_artifacts", kExitConfig};
    if (dynamic_cast<const PromptTooLong*>(&e)) return {"prompt_too_long", kExitConfig};
    if (dynamic_cast<const MissingDescription*>(&e)) return {"missing_description", kExitConfig};
    if (dynamic_cast<const CLI::Error*>(&e)) return {"usage", kExitConfig};
    if (dynamic_cast<const fs::filesystem_error*>(&e)) return {"io", kExitConfig};
    return {"internal", kExitConfig};
}

int report_failure(const std::exception& e, const std::string& output_dir) {
    const auto [kind, code] = classify(e);
    const json record = {{"error", kind}, {"message", e.what()}, {"exit_code", code}};
    std::cerr << record.dump() << "\n";
    if (!output_dir.empty()) {
        std::error_code ec;
        fs::create_directories(output_dir, ec);
        std::ofstream out(fs::path(output_dir) / "error.json");
        if (out) out << record.dump(2) << "\n";
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-domain dialogue state tracking with self-selected in-context examples"};
    app.require_subcommand(1);

    RunOptions run_opts;
    auto* run = app.add_subcommand("run", "Evaluate one target domain end to end");
    add_run_options(*run, run_opts);

    RunOptions ablate_opts;
    std::string ablate_domains = "attraction,hotel,restaurant,taxi,train";
    auto* ablate = app.add_subcommand("ablate", "Run the five retrieval variants over several domains");
    add_run_options(*ablate, ablate_opts);
    ablate->add_option("--domains", ablate_domains, "Comma-separated target domains");

    RunOptions oracle_opts;
    std::string oracle_out;
    std::string oracle_domains;
    bool oracle_ablation = false;
    auto* oracle = app.add_subcommand("make-oracle-script", "Write a mock script that answers with gold states");
    add_run_options(*oracle, oracle_opts);
    oracle->add_option("--script-out", oracle_out, "Where to write the script")->required();
    oracle->add_option("--domains", oracle_domains, "Cover several target domains");
    oracle->add_flag("--ablation", oracle_ablation, "Cover every ablation variant");

    std::string export_dir;
    std::string export_out;
    auto* exporter = app.add_subcommand("export-explanations", "Dump chosen examples and their explanations as CSV");
    exporter->add_option("run_dir", export_dir, "Run output directory")->required();
    exporter->add_option("--out", export_out, "CSV path (default: stdout)");

    std::string verify_dir;
    auto* verify = app.add_subcommand("verify", "Recompute a run's report from its records and compare");
    verify->add_option("run_dir", verify_dir, "Run output directory")->required();

    std::string cache_file;
    auto* cache_stats = app.add_subcommand("cache-stats", "Summarize a response cache ledger");
    cache_stats->add_option("cache", cache_file, "Cache ledger path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    std::string output_dir;
    try {
        if (*run) {
            const RunConfig config = resolve_config(run_opts);
            output_dir = config.output_dir;
            config.validate();
            BackendStack stack(config);
            const auto result = run_pipeline(config, stack.backend());
            write_cache_stats(stack, config.output_dir);
            std::cout << json{{"label", result.report.run_label},
                              {"target_domain", result.report.target_domain},
                              {"domain_jga", result.report.domain_jga},
                              {"n_turns", result.report.n_turns},
                              {"processed", result.processed},
                              {"resumed", result.resumed},
                              {"output", config.output_dir}}
                             .dump()
                      << "\n";
        } else if (*ablate) {
            RunConfig base = resolve_config(ablate_opts);
            output_dir = base.output_dir;
            const auto domains = parse_domains(ablate_domains);
            if (base.target_domain.empty()) base.target_domain = domains.front();
            const auto configs = ablation_configs(base, domains);
            for (const auto& c : configs) c.validate();
            BackendStack stack(base);
            const auto table = run_ablation(configs, stack.backend());
            write_text(fs::path(base.output_dir) / "ablation.md", table.markdown());
            write_text(fs::path(base.output_dir) / "ablation.json", table.to_json().dump(2) + "\n");
            write_cache_stats(stack, base.output_dir);
            std::cout << table.markdown();
        } else if (*oracle) {
            RunConfig base = resolve_config(oracle_opts);
            if (base.output_dir.empty()) base.output_dir = ".";
            if (base.backend == BackendMode::mock && base.mock_script.empty()) base.mock_script = oracle_out;
            std::vector<std::string> domains =
                oracle_domains.empty() ? std::vector<std::string>{base.target_domain} : parse_domains(oracle_domains);
            if (base.target_domain.empty()) base.target_domain = domains.front();
            std::vector<RunConfig> configs;
            if (oracle_ablation) {
                configs = ablation_configs(base, domains);
            } else {
                for (const auto& d : domains) {
                    RunConfig c = base;
                    c.target_domain = d;
                    configs.push_back(c);
                }
            }
            std::vector<std::pair<std::string, std::string>> entries;
            for (const auto& c : configs) {
                auto more = gold_oracle_entries(c);
                entries.insert(entries.end(), more.begin(), more.end());
            }
            write_text(oracle_out, oracle_script_jsonl(entries));
            std::cout << json{{"entries", entries.size()}, {"script", oracle_out}}.dump() << "\n";
        } else if (*exporter) {
            const auto out = export_explanations(export_dir);
            if (out.warning) std::cerr << json{{"warning", *out.warning}}.dump() << "\n";
            if (export_out.empty()) {
                std::cout << out.csv;
            } else {
                write_text(export_out, out.csv);
                std::cout << json{{"rows", out.rows}, {"csv", export_out}}.dump() << "\n";
            }
        } else if (*verify) {
            const auto result = verify_run(verify_dir);
            std::cout << json{{"match", result.matches}, {"detail", result.detail}}.dump() << "\n";
            return result.matches ? kExitOk : kExitMismatch;
        } else if (*cache_stats) {
            if (!fs::exists(cache_file)) throw MissingArtifacts("no cache ledger at " + cache_file);
            llm::CachedBackend cache(cache_file);
            std::cout << json{{"entries", cache.entries()}, {"size_bytes", cache.cache_stats().size_bytes}}.dump() << "\n";
        }
    } catch (const std::exception& e) {
        return report_failure(e, output_dir);
    }
    return kExitOk;
}
