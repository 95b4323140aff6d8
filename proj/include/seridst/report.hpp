#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seridst/eval.hpp"
#include "seridst/json_io.hpp"

namespace seridst {

inline constexpr const char* kReportSchema = "seridst-report/1";

struct EvalReport {
    std::string schema_version = kReportSchema;
    std::string target_domain;
    std::string run_label;
    std::size_t n_turns = 0;
    std::size_t n_correct = 0;
    double domain_jga = 0.0;
    ErrorCounts error_counts;
    std::map<std::string, int> domain_influence;
    int prediction_failures = 0;
    int retrieval_failures = 0;
    std::map<std::string, int> unknown_slots;
    /// How turns were compared; recorded because the choice is ours, not the metric's.
    std::string judgement_basis = "accumulated-target-restricted";
    std::string turn_selection = "all";
    nlohmann::json config = nlohmann::json::object();
    std::vector<TurnJudgement> judgements;
};

/// Fills the aggregate fields of `report` from its judgements.
inline void summarize(EvalReport& report) {
    report.n_turns = report.judgements.size();
    report.n_correct = 0;
    report.error_counts = {};
    for (const auto& j : report.judgements) {
        report.n_correct += j.correct ? 1 : 0;
        report.error_counts += j.counts();
    }
    report.domain_jga = domain_jga(report.judgements);
}

inline nlohmann::json to_json(const TurnJudgement& j) {
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& e : j.errors) {
        errors.push_back({{"slot", e.slot.str()},
                          {"kind", to_string(e.kind)},
                          {"predicted", e.predicted ? value_to_json(*e.predicted) : nlohmann::json()},
                          {"gold", e.gold ? value_to_json(*e.gold) : nlohmann::json()}});
    }
    return {{"dialogue_id", j.dialogue_id}, {"turn_index", j.turn_index}, {"correct", j.correct}, {"errors", errors}};
}

inline TurnJudgement judgement_from_json(const nlohmann::json& j) {
    TurnJudgement t;
    t.dialogue_id = j.at("dialogue_id").get<std::string>();
    t.turn_index = j.at("turn_index").get<int>();
    t.correct = j.at("correct").get<bool>();
    for (const auto& e : j.at("errors")) {
        SlotError err;
        err.slot = SlotName::from(e.at("slot").get<std::string>());
        err.kind = parse_error_kind(e.at("kind").get<std::string>());
        if (!e.at("predicted").is_null()) err.predicted = value_from_json(e.at("predicted"));
        if (!e.at("gold").is_null()) err.gold = value_from_json(e.at("gold"));
        t.errors.push_back(std::move(err));
    }
    return t;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json judgements = nlohmann::json::array();
    for (const auto& j : r.judgements) judgements.push_back(to_json(j));
    return {{"schema_version", r.schema_version},
            {"target_domain", r.target_domain},
            {"run_label", r.run_label},
            {"n_turns", r.n_turns},
            {"n_correct", r.n_correct},
            {"domain_jga", r.domain_jga},
            {"error_counts",
             {{"ignore", r.error_counts.ignore}, {"spurious", r.error_counts.spurious}, {"wrong", r.error_counts.wrong}}},
            {"domain_influence", r.domain_influence},
            {"failures", {{"prediction", r.prediction_failures}, {"retrieval", r.retrieval_failures}}},
            {"unknown_slots", r.unknown_slots},
            {"judgement_basis", r.judgement_basis},
            {"turn_selection", r.turn_selection},
            {"config", r.config},
            {"judgements", judgements}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.schema_version = j.at("schema_version").get<std::string>();
    if (r.schema_version != kReportSchema)
        throw SchemaError("unsupported report schema '" + r.schema_version + "'");
    r.target_domain = j.at("target_domain").get<std::string>();
    r.run_label = j.at("run_label").get<std::string>();
    r.n_turns = j.at("n_turns").get<std::size_t>();
    r.n_correct = j.at("n_correct").get<std::size_t>();
    r.domain_jga = j.at("domain_jga").get<double>();
    const auto& ec = j.at("error_counts");
    r.error_counts = {ec.at("ignore").get<int>(), ec.at("spurious").get<int>(), ec.at("wrong").get<int>()};
    r.domain_influence = j.at("domain_influence").get<std::map<std::string, int>>();
    r.prediction_failures = j.at("failures").at("prediction").get<int>();
    r.retrieval_failures = j.at("failures").at("retrieval").get<int>();
    r.unknown_slots = j.at("unknown_slots").get<std::map<std::string, int>>();
    r.judgement_basis = j.at("judgement_basis").get<std::string>();
    r.turn_selection = j.at("turn_selection").get<std::string>();
    r.config = j.at("config");
    for (const auto& t : j.at("judgements")) r.judgements.push_back(judgement_from_json(t));
    return r;
}

inline std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
    return buf;
}

/// DomainJGA per (run, domain) with an average column, laid out like a results table.
struct ResultTable {
    struct Row {
        std::string label;
        std::map<std::string, double> jga;

        /// Mean over the domains this row has values for.
        double average() const {
            if (jga.empty()) return 0.0;
            double sum = 0.0;
            for (const auto& [_, v] : jga) sum += v;
            return sum / static_cast<double>(jga.size());
        }
    };

    std::vector<std::string> domains;
    std::vector<Row> rows;

    std::string markdown() const {
        std::ostringstream out;
        out << "| Ret. Method |";
        for (const auto& d : domains) out << " " << d << " |";
        out << " avg |\n|---|";
        for (std::size_t i = 0; i < domains.size(); ++i) out << "---|";
        out << "---|\n";
        for (const auto& row : rows) {
            out << "| " << row.label << " |";
            for (const auto& d : domains) {
                auto it = row.jga.find(d);
                out << " " << (it == row.jga.end() ? std::string("-") : percent(it->second)) << " |";
            }
            out << " " << percent(row.average()) << " |\n";
        }
        return out.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json rows_json = nlohmann::json::array();
        for (const auto& row : rows)
            rows_json.push_back({{"label", row.label}, {"domain_jga", row.jga}, {"avg", row.average()}});
        return {{"domains", domains}, {"rows", rows_json}};
    }
};

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

/// Serializes a report as "json", "markdown-summary" or "csv-judgements".
inline std::string export_report(const EvalReport& report, std::string_view format) {
    if (format == "json") return to_json(report).dump(2) + "\n";
    if (format == "csv-judgements") {
        std::ostringstream out;
        out << "dialogue_id,turn_index,correct,n_ignore,n_spurious,n_wrong\n";
        for (const auto& j : report.judgements) {
            const auto c = j.counts();
            out << csv_field(j.dialogue_id) << "," << j.turn_index << "," << (j.correct ? "true" : "false") << ","
                << c.ignore << "," << c.spurious << "," << c.wrong << "\n";
        }
        return out.str();
    }
    if (format == "markdown-summary") {
        ResultTable table;
        table.domains = {report.target_domain};
        table.rows.push_back({report.run_label.empty() ? std::string("run") : report.run_label,
                              {{report.target_domain, report.domain_jga}}});
        std::ostringstream out;
        out << table.markdown() << "\n";
        out << "| turns | correct | ignore | spurious | wrong | failed predictions | failed retrievals |\n";
        out << "|---|---|---|---|---|---|---|\n";
        out << "| " << report.n_turns << " | " << report.n_correct << " | " << report.error_counts.ignore << " | "
            << report.error_counts.spurious << " | " << report.error_counts.wrong << " | "
            << report.prediction_failures << " | " << report.retrieval_failures << " |\n";
        if (!report.domain_influence.empty()) {
            out << "\n| source domain | retrieved examples |\n|---|---|\n";
            for (const auto& [domain, count] : report.domain_influence) out << "| " << domain << " | " << count << " |\n";
        }
        return out.str();
    }
    throw UnsupportedFormat("unsupported report format '" + std::string(format) + "'");
}

}  // namespace seridst
