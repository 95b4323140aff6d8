#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "seridst/corpus_io.hpp"
#include "seridst/dst.hpp"
#include "seridst/eval.hpp"
#include "seridst/json_io.hpp"
#include "seridst/report.hpp"
#include "seridst/retriever.hpp"
#include "seridst/similarity.hpp"

namespace seridst {

namespace fs = std::filesystem;

inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kRetrievalFile = "retrieval.jsonl";
inline constexpr const char* kPredictionFile = "predictions.jsonl";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kSummaryFile = "report.md";
inline constexpr const char* kJudgementFile = "judgements.csv";

enum class BackendMode { live, mock, cache_only };

inline const char* to_string(BackendMode mode) {
    switch (mode) {
        case BackendMode::live: return "live";
        case BackendMode::mock: return "mock";
        case BackendMode::cache_only: return "cache-only";
    }
    return "unknown";
}

inline BackendMode parse_backend_mode(std::string_view tag) {
    if (tag == "live") return BackendMode::live;
    if (tag == "mock") return BackendMode::mock;
    if (tag == "cache-only") return BackendMode::cache_only;
    throw ConfigError("unknown backend '" + std::string(tag) + "' (expected live, mock or cache-only)");
}

struct RunConfig {
    std::string corpus_path;
    std::string corpus_format = "jsonl-simple";
    /// MultiWOZ split evaluated; ignored for corpora without split tags.
    std::string test_split = "test";
    /// Split the example pool is drawn from; ignored for corpora without split tags.
    std::string pool_split = "train";
    std::string target_domain;

    std::size_t k = 20;
    std::size_t m = 3;
    RetrievalMethod method = RetrievalMethod::self;
    std::optional<std::uint64_t> seed;
    Bm25Params bm25;

    BackendMode backend = BackendMode::mock;
    llm::CompletionSettings completion;
    int retries = 2;
    std::size_t prompt_budget = 3500;
    std::string cache_path;
    std::string mock_script;
    int max_in_flight = 4;
    int min_interval_ms = 0;

    std::string slot_descriptions;  // empty: built-in set
    std::string output_dir;
    std::optional<std::size_t> limit;
    int workers = 1;
    std::string label;  // empty: derived from method and m
    bool active_turns_only = false;

    std::string effective_label() const {
        if (!label.empty()) return label;
        switch (method) {
            case RetrievalMethod::random: return "Random_" + std::to_string(m);
            case RetrievalMethod::self: return "SERI_Top_" + std::to_string(m);
            case RetrievalMethod::self_no_explain: return "w/o Explain_" + std::to_string(m);
        }
        return "run";
    }

    void validate() const {
        if (corpus_path.empty()) throw ConfigError("corpus path is required");
        parse_corpus_format(corpus_format);
        if (target_domain.empty()) throw ConfigError("target domain is required");
        if (!is_known_domain(target_domain)) throw UnknownDomain(target_domain);
        if (m < 1 || m > k) throw ConfigError("need 1 <= m <= k (m=" + std::to_string(m) + ", k=" + std::to_string(k) + ")");
        if (method == RetrievalMethod::random && !seed) throw ConfigError("random retrieval needs a seed");
        if (retries < 0) throw ConfigError("retries must be non-negative");
        if (workers < 1) throw ConfigError("workers must be at least 1");
        if (bm25.k1 < 0 || bm25.b < 0 || bm25.b > 1) throw ConfigError("bm25 needs k1 >= 0 and 0 <= b <= 1");
        if (completion.temperature < 0) throw ConfigError("temperature must be non-negative");
        if (completion.max_output_tokens < 1) throw ConfigError("max_output_tokens must be positive");
        if (output_dir.empty()) throw ConfigError("output directory is required");
        if (backend == BackendMode::mock && mock_script.empty())
            throw ConfigError("mock backend needs a mock script");
        if (backend == BackendMode::cache_only && cache_path.empty())
            throw ConfigError("cache-only backend needs a cache path");
    }

    /// Every field, including operational ones.
    nlohmann::json to_json() const {
        auto j = experiment_json();
        j["output_dir"] = output_dir;
        j["workers"] = workers;
        j["llm"]["backend"] = to_string(backend);
        j["llm"]["cache"] = cache_path;
        j["llm"]["mock_script"] = mock_script;
        j["llm"]["max_in_flight"] = max_in_flight;
        j["llm"]["min_interval_ms"] = min_interval_ms;
        return j;
    }

    /// The fields that determine results. Embedded in reports and compared on resume.
    nlohmann::json experiment_json() const {
        return {{"corpus", {{"path", corpus_path}, {"format", corpus_format}, {"test_split", test_split}, {"pool_split", pool_split}}},
                {"target_domain", target_domain},
                {"retrieval", {{"k", k}, {"m", m}, {"method", to_string(method)}, {"seed", seed ? nlohmann::json(*seed) : nlohmann::json()}}},
                {"bm25", {{"k1", bm25.k1}, {"b", bm25.b}}},
                {"llm",
                 {{"model", completion.model_id},
                  {"temperature", completion.temperature},
                  {"max_output_tokens", completion.max_output_tokens},
                  {"retries", retries},
                  {"prompt_budget", prompt_budget}}},
                {"slot_descriptions", slot_descriptions},
                {"limit", limit ? nlohmann::json(*limit) : nlohmann::json()},
                {"label", effective_label()},
                {"active_turns_only", active_turns_only}};
    }

    /// Overlays the keys present in `j` onto this config. Unknown keys are rejected.
    void merge_json(const nlohmann::json& j) {
        static const std::set<std::string> top = {"corpus", "target_domain", "retrieval", "bm25", "llm", "slot_descriptions",
                                                  "output_dir", "limit", "workers", "label", "active_turns_only"};
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        for (const auto& [key, _] : j.items())
            if (!top.count(key)) throw ConfigError("unknown config key '" + key + "'");
        try {
            if (j.contains("corpus")) {
                const auto& c = j.at("corpus");
                if (c.contains("path")) corpus_path = c.at("path").get<std::string>();
                if (c.contains("format")) corpus_format = c.at("format").get<std::string>();
                if (c.contains("test_split")) test_split = c.at("test_split").get<std::string>();
                if (c.contains("pool_split")) pool_split = c.at("pool_split").get<std::string>();
            }
            if (j.contains("target_domain")) target_domain = j.at("target_domain").get<std::string>();
            if (j.contains("retrieval")) {
                const auto& r = j.at("retrieval");
                if (r.contains("k")) k = r.at("k").get<std::size_t>();
                if (r.contains("m")) m = r.at("m").get<std::size_t>();
                if (r.contains("method")) method = parse_retrieval_method(r.at("method").get<std::string>());
                if (r.contains("seed") && !r.at("seed").is_null()) seed = r.at("seed").get<std::uint64_t>();
            }
            if (j.contains("bm25")) {
                const auto& b = j.at("bm25");
                if (b.contains("k1")) bm25.k1 = b.at("k1").get<double>();
                if (b.contains("b")) bm25.b = b.at("b").get<double>();
            }
            if (j.contains("llm")) {
                const auto& l = j.at("llm");
                if (l.contains("backend")) backend = parse_backend_mode(l.at("backend").get<std::string>());
                if (l.contains("model")) completion.model_id = l.at("model").get<std::string>();
                if (l.contains("temperature")) completion.temperature = l.at("temperature").get<double>();
                if (l.contains("max_output_tokens")) completion.max_output_tokens = l.at("max_output_tokens").get<int>();
                if (l.contains("retries")) retries = l.at("retries").get<int>();
                if (l.contains("prompt_budget")) prompt_budget = l.at("prompt_budget").get<std::size_t>();
                if (l.contains("cache")) cache_path = l.at("cache").get<std::string>();
                if (l.contains("mock_script")) mock_script = l.at("mock_script").get<std::string>();
                if (l.contains("max_in_flight")) max_in_flight = l.at("max_in_flight").get<int>();
                if (l.contains("min_interval_ms")) min_interval_ms = l.at("min_interval_ms").get<int>();
            }
            if (j.contains("slot_descriptions")) slot_descriptions = j.at("slot_descriptions").get<std::string>();
            if (j.contains("output_dir")) output_dir = j.at("output_dir").get<std::string>();
            if (j.contains("limit") && !j.at("limit").is_null()) limit = j.at("limit").get<std::size_t>();
            if (j.contains("workers")) workers = j.at("workers").get<int>();
            if (j.contains("label")) label = j.at("label").get<std::string>();
            if (j.contains("active_turns_only")) active_turns_only = j.at("active_turns_only").get<bool>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("bad config value: ") + e.what());
        }
    }

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig c;
        c.merge_json(j);
        return c;
    }
};

/// Everything a run needs besides the backend, built once per run.
struct RunContext {
    RunConfig config;
    Corpus corpus;
    std::vector<TestInstance> instances;
    Bm25Index index;
    std::vector<SlotDescription> descriptions;
};

inline RunContext prepare_run(const RunConfig& config) {
    config.validate();
    RunContext ctx;
    ctx.config = config;
    ctx.corpus = load_corpus(config.corpus_path, config.corpus_format);
    ctx.instances = build_test_instances(select_split(ctx.corpus, config.test_split), config.target_domain);
    if (config.limit && ctx.instances.size() > *config.limit) ctx.instances.resize(*config.limit);
    ctx.index = build_index(candidate_pool(exclude_domain(select_split(ctx.corpus, config.pool_split), config.target_domain)),
                            config.bm25);
    ctx.descriptions =
        config.slot_descriptions.empty() ? default_slot_descriptions() : load_slot_descriptions(config.slot_descriptions);
    return ctx;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Seed for one instance's random draw, independent of processing order.
inline std::uint64_t instance_seed(std::uint64_t run_seed, const TestInstance& inst) {
    return run_seed ^ fnv1a64(inst.dialogue_id + "#" + std::to_string(inst.turn_index));
}

struct InstanceOutcome {
    std::size_t n_candidates = 0;
    std::string request_digest;  // empty when no retrieval prompt was sent
    RetrievedSet retrieved;
    Prediction prediction;
};

/// top_k -> example selection -> DST prediction for one test turn.
///
/// A retrieval prompt over budget is retried with the lowest-ranked candidate
/// dropped. Retrieval that never parses yields a failed, empty example set.
inline InstanceOutcome process_instance(const RunContext& ctx, const TestInstance& inst, llm::Backend& backend) {
    const auto& cfg = ctx.config;
    const PromptBudget budget{cfg.prompt_budget};
    InstanceOutcome out;
    auto candidates = ctx.index.top_k(inst.current_user, cfg.k);
    out.n_candidates = candidates.size();
    const std::size_t m = std::min(cfg.m, candidates.size());

    if (cfg.method == RetrievalMethod::random) {
        out.retrieved = random_baseline(candidates, m, instance_seed(*cfg.seed, inst));
    } else if (candidates.empty()) {
        out.retrieved.method = cfg.method;
    } else {
        RetrievalRequest req;
        req.test_instance = inst;
        req.candidates = std::move(candidates);
        req.target_domain = cfg.target_domain;
        req.target_slots = domain_slots(cfg.target_domain);
        req.m = m;
        req.with_explanations = cfg.method == RetrievalMethod::self;
        for (;;) {
            try {
                out.request_digest = cfg.completion.request(build_retrieval_prompt(req, budget)).digest();
                break;
            } catch (const PromptTooLong&) {
                if (req.candidates.size() <= req.m) throw;
                req.candidates.pop_back();
            }
        }
        out.n_candidates = req.candidates.size();
        try {
            out.retrieved = retrieve_examples(req, backend, cfg.retries, cfg.completion, budget);
        } catch (const RetrievalFailed& e) {
            out.retrieved.method = cfg.method;
            out.retrieved.failed = true;
            out.retrieved.raw_response = e.last_response();
        }
    }
    out.prediction = predict_turn(inst, out.retrieved, ctx.descriptions, cfg.target_domain, backend, cfg.retries,
                                  cfg.completion, budget);
    return out;
}

// ---------------------------------------------------------------------------
// Persisted records

struct RetrievalRecord {
    std::string dialogue_id;
    int turn_index = 0;
    std::string request_digest;
    std::size_t n_candidates = 0;
    RetrievedSet retrieved;
};

struct PredictionRecord {
    Prediction prediction;
    BeliefState gold_turn_state;
};

inline nlohmann::json to_json(const RetrievalRecord& r) {
    nlohmann::json chosen = nlohmann::json::array();
    nlohmann::json indices = nlohmann::json::array();
    for (const auto& c : r.retrieved.chosen) {
        chosen.push_back(candidate_to_json(c));
        indices.push_back(c.index);
    }
    return {{"dialogue_id", r.dialogue_id},
            {"turn_index", r.turn_index},
            {"request_digest", r.request_digest.empty() ? nlohmann::json() : nlohmann::json(r.request_digest)},
            {"method", to_string(r.retrieved.method)},
            {"n_candidates", r.n_candidates},
            {"indices", indices},
            {"chosen", chosen},
            {"explanations", r.retrieved.explanations},
            {"raw_response", r.retrieved.raw_response},
            {"failed", r.retrieved.failed}};
}

inline RetrievalRecord retrieval_record_from_json(const nlohmann::json& j) {
    RetrievalRecord r;
    r.dialogue_id = j.at("dialogue_id").get<std::string>();
    r.turn_index = j.at("turn_index").get<int>();
    if (!j.at("request_digest").is_null()) r.request_digest = j.at("request_digest").get<std::string>();
    r.n_candidates = j.at("n_candidates").get<std::size_t>();
    r.retrieved.method = parse_retrieval_method(j.at("method").get<std::string>());
    for (const auto& c : j.at("chosen")) r.retrieved.chosen.push_back(candidate_from_json(c));
    r.retrieved.explanations = j.at("explanations").get<std::vector<std::string>>();
    r.retrieved.raw_response = j.at("raw_response").get<std::string>();
    r.retrieved.failed = j.at("failed").get<bool>();
    return r;
}

inline nlohmann::json to_json(const PredictionRecord& r) {
    const auto& p = r.prediction;
    return {{"dialogue_id", p.dialogue_id},
            {"turn_index", p.turn_index},
            {"state", state_to_json(p.predicted_turn_state)},
            {"raw_response", p.raw_response},
            {"method", to_string(p.retrieved_method)},
            {"failed", p.failed},
            {"unknown_slots", p.diagnostics.unknown_slots},
            {"gold_state", state_to_json(r.gold_turn_state)}};
}

inline PredictionRecord prediction_record_from_json(const nlohmann::json& j) {
    PredictionRecord r;
    auto& p = r.prediction;
    p.dialogue_id = j.at("dialogue_id").get<std::string>();
    p.turn_index = j.at("turn_index").get<int>();
    p.predicted_turn_state = state_from_json(j.at("state"));
    p.raw_response = j.at("raw_response").get<std::string>();
    p.retrieved_method = parse_retrieval_method(j.at("method").get<std::string>());
    p.failed = j.at("failed").get<bool>();
    p.diagnostics.unknown_slots = j.at("unknown_slots").get<std::map<std::string, int>>();
    r.gold_turn_state = state_from_json(j.at("gold_state"));
    return r;
}

using RecordKey = std::pair<std::string, int>;

/// Reads a JSONL artifact keyed by (dialogue_id, turn_index). The first record
/// per key wins; a torn trailing line from an interrupted run is ignored.
template <typename Record, typename Decode>
std::map<RecordKey, Record> read_records(const fs::path& path, Decode decode) {
    std::map<RecordKey, Record> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw SchemaError("corrupt record in " + path.string());
        }
        try {
            Record r = decode(j);
            RecordKey key{j.at("dialogue_id").get<std::string>(), j.at("turn_index").get<int>()};
            out.emplace(std::move(key), std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError("malformed record in " + path.string() + ": " + e.what());
        }
    }
    return out;
}

inline std::map<RecordKey, RetrievalRecord> read_retrieval_records(const fs::path& path) {
    return read_records<RetrievalRecord>(path, retrieval_record_from_json);
}

inline std::map<RecordKey, PredictionRecord> read_prediction_records(const fs::path& path) {
    return read_records<PredictionRecord>(path, prediction_record_from_json);
}

/// Line-at-a-time appender shared by workers.
class JsonlAppender {
public:
    explicit JsonlAppender(const fs::path& path) : out_(path, std::ios::app | std::ios::binary), path_(path) {
        if (!out_) throw IoError("cannot open " + path.string() + " for appending");
        // Start on a fresh line if a previous run died mid-write.
        std::ifstream tail(path, std::ios::binary);
        tail.seekg(0, std::ios::end);
        if (tail.tellg() > 0) {
            tail.seekg(-1, std::ios::end);
            if (tail.get() != '\n') out_ << '\n';
        }
    }

    void append(const nlohmann::json& record) {
        std::lock_guard lock(mutex_);
        out_ << record.dump() << '\n';
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_.string());
    }

private:
    std::mutex mutex_;
    std::ofstream out_;
    fs::path path_;
};

/// Builds the report purely from persisted records.
inline EvalReport assemble_report(const nlohmann::json& experiment, const std::map<RecordKey, RetrievalRecord>& retrievals,
                                  const std::map<RecordKey, PredictionRecord>& predictions) {
    EvalReport report;
    report.target_domain = experiment.at("target_domain").get<std::string>();
    report.run_label = experiment.at("label").get<std::string>();
    const bool active_only = experiment.value("active_turns_only", false);
    report.turn_selection = active_only ? "target-active" : "all";
    report.config = experiment;

    std::map<std::string, std::vector<const PredictionRecord*>> by_dialogue;
    for (const auto& [key, rec] : predictions) {
        if (!retrievals.count(key)) throw MissingArtifacts("prediction without retrieval record for " + key.first);
        by_dialogue[key.first].push_back(&rec);
    }
    for (const auto& [id, recs] : by_dialogue) {
        std::vector<Prediction> preds;
        for (const auto* r : recs) preds.push_back(r->prediction);
        const auto predicted = accumulate_predictions(preds);
        BeliefState gold;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            for (const auto& [name, value] : recs[i]->gold_turn_state) gold.set(name, value);
            if (active_only && !gold.has_domain(report.target_domain)) continue;
            report.judgements.push_back(judge_turn(predicted[i].second, gold, report.target_domain, id, predicted[i].first));
        }
        for (const auto* r : recs) {
            report.prediction_failures += r->prediction.failed ? 1 : 0;
            for (const auto& [slot, n] : r->prediction.diagnostics.unknown_slots) report.unknown_slots[slot] += n;
        }
    }
    std::vector<RetrievedSet> sets;
    for (const auto& [key, rec] : retrievals) {
        if (!predictions.count(key)) continue;
        report.retrieval_failures += rec.retrieved.failed ? 1 : 0;
        sets.push_back(rec.retrieved);
    }
    report.domain_influence = domain_influence(sets);
    summarize(report);
    return report;
}

inline void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifacts("missing " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

struct RunResult {
    EvalReport report;
    std::size_t processed = 0;  // instances computed in this invocation
    std::size_t resumed = 0;    // instances taken from an earlier checkpoint
};

inline nlohmann::json report_config(const RunContext& ctx) {
    auto experiment = ctx.config.experiment_json();
    experiment["normalization_table"] = ctx.corpus.normalization_table_version();
    return experiment;
}

/// load -> exclude target -> index pool -> per instance retrieve and predict -> judge.
///
/// Records are appended as instances finish, so an interrupted run resumes where
/// it stopped when started again with the same configuration.
inline RunResult run_pipeline(const RunConfig& config, llm::Backend& backend) {
    RunContext ctx = prepare_run(config);
    const fs::path dir = config.output_dir;
    fs::create_directories(dir);

    const auto experiment = report_config(ctx);
    const fs::path config_path = dir / kConfigFile;
    if (fs::exists(config_path)) {
        const auto previous = read_json_file(config_path);
        if (previous.value("experiment", nlohmann::json()) != experiment)
            throw ConfigError("output directory " + dir.string() + " holds a run with a different configuration");
    }
    write_text(config_path, nlohmann::json{{"experiment", experiment}, {"effective", config.to_json()}}.dump(2) + "\n");

    auto retrievals = read_retrieval_records(dir / kRetrievalFile);
    auto predictions = read_prediction_records(dir / kPredictionFile);

    std::vector<const TestInstance*> pending;
    RunResult result;
    for (const auto& inst : ctx.instances) {
        const RecordKey key{inst.dialogue_id, inst.turn_index};
        if (retrievals.count(key) && predictions.count(key)) {
            ++result.resumed;
            continue;
        }
        pending.push_back(&inst);
    }

    {
        JsonlAppender retrieval_out(dir / kRetrievalFile);
        JsonlAppender prediction_out(dir / kPredictionFile);
        std::atomic<std::size_t> next{0};
        std::atomic<bool> stop{false};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        const auto worker = [&] {
            while (!stop) {
                const std::size_t i = next++;
                if (i >= pending.size()) return;
                const auto& inst = *pending[i];
                try {
                    auto outcome = process_instance(ctx, inst, backend);
                    retrieval_out.append(to_json(RetrievalRecord{inst.dialogue_id, inst.turn_index, outcome.request_digest,
                                                                 outcome.n_candidates, outcome.retrieved}));
                    prediction_out.append(to_json(PredictionRecord{outcome.prediction, inst.gold_turn_state}));
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    stop = true;
                }
            }
        };
        const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), std::max<std::size_t>(pending.size(), 1));
        if (n_workers <= 1) {
            worker();
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        }
        if (failure) std::rethrow_exception(failure);
        result.processed = pending.size();
    }

    retrievals = read_retrieval_records(dir / kRetrievalFile);
    predictions = read_prediction_records(dir / kPredictionFile);
    std::map<RecordKey, RetrievalRecord> selected_r;
    std::map<RecordKey, PredictionRecord> selected_p;
    for (const auto& inst : ctx.instances) {
        const RecordKey key{inst.dialogue_id, inst.turn_index};
        selected_r.emplace(key, retrievals.at(key));
        selected_p.emplace(key, predictions.at(key));
    }
    result.report = assemble_report(experiment, selected_r, selected_p);
    write_text(dir / kReportFile, export_report(result.report, "json"));
    write_text(dir / kSummaryFile, export_report(result.report, "markdown-summary"));
    write_text(dir / kJudgementFile, export_report(result.report, "csv-judgements"));
    return result;
}

struct VerifyResult {
    bool matches = false;
    std::string detail;
};

/// Recomputes the report from a run directory's JSONL records and compares it with report.json.
inline VerifyResult verify_run(const fs::path& dir) {
    const auto config = read_json_file(dir / kConfigFile);
    const auto stored = read_json_file(dir / kReportFile);
    if (!fs::exists(dir / kRetrievalFile) || !fs::exists(dir / kPredictionFile))
        throw MissingArtifacts("run directory " + dir.string() + " lacks JSONL records");
    const auto recomputed = to_json(assemble_report(config.at("experiment"), read_retrieval_records(dir / kRetrievalFile),
                                                    read_prediction_records(dir / kPredictionFile)));
    if (recomputed == stored) return {true, "report matches records"};
    const auto patch = nlohmann::json::diff(stored, recomputed);
    return {false, patch.dump().substr(0, 2000)};
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationVariant {
    std::string label;
    RetrievalMethod method;
    std::size_t m;
};

/// Random_3, SERI_Top_1..3 and the no-explanation variant with three examples.
inline std::vector<AblationVariant> standard_ablation() {
    return {{"Random_3", RetrievalMethod::random, 3},
            {"SERI_Top_1", RetrievalMethod::self, 1},
            {"SERI_Top_2", RetrievalMethod::self, 2},
            {"SERI_Top_3", RetrievalMethod::self, 3},
            {"w/o Explain_3", RetrievalMethod::self_no_explain, 3}};
}

inline std::string label_slug(std::string_view label) {
    std::string out;
    for (char c : label) out.push_back(text::is_alnum(c) ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : '_');
    return out;
}

/// One config per (variant, domain), sharing everything else with `base`.
inline std::vector<RunConfig> ablation_configs(const RunConfig& base, const std::vector<std::string>& domains,
                                               const std::vector<AblationVariant>& variants = standard_ablation()) {
    std::vector<RunConfig> out;
    for (const auto& v : variants) {
        for (const auto& d : domains) {
            RunConfig c = base;
            c.method = v.method;
            c.m = v.m;
            c.label = v.label;
            c.target_domain = d;
            c.output_dir = (fs::path(base.output_dir) / label_slug(v.label) / d).string();
            out.push_back(std::move(c));
        }
    }
    return out;
}

/// Runs every config and tabulates DomainJGA as label x domain with an average column.
inline ResultTable run_ablation(const std::vector<RunConfig>& configs, llm::Backend& backend) {
    ResultTable table;
    std::map<std::string, std::size_t> row_of;
    for (const auto& c : configs) {
        if (std::find(table.domains.begin(), table.domains.end(), c.target_domain) == table.domains.end())
            table.domains.push_back(c.target_domain);
        const auto label = c.effective_label();
        if (!row_of.count(label)) {
            row_of[label] = table.rows.size();
            table.rows.push_back({label, {}});
        }
        const auto result = run_pipeline(c, backend);
        table.rows[row_of[label]].jga[c.target_domain] = result.report.domain_jga;
    }
    return table;
}

// ---------------------------------------------------------------------------
// Explanation export

struct ExplanationExport {
    std::string csv;
    std::size_t rows = 0;
    std::optional<std::string> warning;
};

/// One CSV row per (test instance, chosen example) with the model's explanation.
inline ExplanationExport export_explanations(const fs::path& run_dir) {
    const fs::path path = run_dir / kRetrievalFile;
    if (!fs::exists(path)) throw MissingArtifacts("no " + std::string(kRetrievalFile) + " in " + run_dir.string());
    const auto records = read_retrieval_records(path);
    ExplanationExport out;
    std::ostringstream csv;
    csv << "dialogue_id,turn_index,rank,candidate_index,example_dialogue_id,example_turn_index,example_utterance,"
           "example_label,explanation\n";
    bool skipped = false;
    for (const auto& [key, rec] : records) {
        if (rec.retrieved.method != RetrievalMethod::self) {
            skipped = true;
            continue;
        }
        for (std::size_t i = 0; i < rec.retrieved.chosen.size(); ++i) {
            const auto& c = rec.retrieved.chosen[i];
            const std::string explanation = i < rec.retrieved.explanations.size() ? rec.retrieved.explanations[i] : "";
            csv << csv_field(key.first) << "," << key.second << "," << i << "," << c.index << ","
                << csv_field(c.doc_id.dialogue_id) << "," << c.doc_id.turn_index << "," << csv_field(c.utterance) << ","
                << csv_field(c.label.render()) << "," << csv_field(explanation) << "\n";
            ++out.rows;
        }
    }
    out.csv = csv.str();
    if (skipped)
        out.warning = "records without explanations (random or no-explanation retrieval) were skipped";
    return out;
}

// ---------------------------------------------------------------------------
// Gold oracle

inline constexpr std::string_view kRetrievalPromptPrefix = "I'm finding helpful";

/// Mock script entries answering every prompt of `config`'s run with the gold
/// turn state (DST) and "{answer : [0, 1, 2], ...}" (retrieval, cut to the
/// candidates available). Entries are keyed by request digest.
inline std::vector<std::pair<std::string, std::string>> gold_oracle_entries(const RunConfig& config) {
    RunContext ctx = prepare_run(config);
    std::vector<std::pair<std::string, std::string>> entries;
    const TestInstance* current = nullptr;
    std::size_t current_candidates = 0;
    llm::CallbackBackend oracle([&](const llm::CompletionRequest& req) {
        std::string answer;
        if (text::starts_with(req.prompt, kRetrievalPromptPrefix)) {
            const std::size_t n = std::min<std::size_t>(3, current_candidates);
            answer = "{answer : [";
            for (std::size_t i = 0; i < n; ++i) answer += (i ? ", " : "") + std::to_string(i);
            answer += "], explanation : [";
            for (std::size_t i = 0; i < n; ++i) answer += std::string(i ? ", " : "") + "\"example " + std::to_string(i) + " shares the request pattern\"";
            answer += "]}";
        } else {
            answer = state_to_json(current->gold_turn_state).dump();
        }
        entries.emplace_back(req.digest(), answer);
        return answer;
    });
    for (const auto& inst : ctx.instances) {
        current = &inst;
        current_candidates = std::min(ctx.config.k, ctx.index.top_k(inst.current_user, ctx.config.k).size());
        process_instance(ctx, inst, oracle);
    }
    return entries;
}

inline std::string oracle_script_jsonl(const std::vector<std::pair<std::string, std::string>>& entries) {
    std::string out;
    for (const auto& [digest, text] : entries)
        out += nlohmann::json{{"match", "digest"}, {"key", digest}, {"response_text", text}}.dump() + "\n";
    return out;
}

}  // namespace seridst
