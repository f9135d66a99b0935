#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "provlens/detector.hpp"
#include "provlens/pipeline.hpp"

namespace provlens {

/// > 0.7 critical, [0.3, 0.7] moderate, < 0.3 irrelevant. Both bounds of the
/// moderate band are inclusive.
enum class ImportanceBand { Critical, Moderate, Irrelevant };

ImportanceBand band_of(double importance);
std::string_view to_string(ImportanceBand band);

using LabelMap = std::map<NodeId, std::string>;

/// "2018-04-06T11:00:00-11:15:00" (UTC, whole seconds). The end carries no
/// date and is read as the first matching time after the start, so windows
/// span at most 24 hours.
std::string format_window(TimeWindow window);
/// Throws FormatError.
TimeWindow parse_window(std::string_view text);
/// File-name-safe form, "20180406T110000-111500".
std::string window_file_stem(TimeWindow window);

/// Key names and nesting follow the published sample; "labels" (node id to
/// label) and "skipped" are extra top-level keys.
nlohmann::json emit_json(const ExplanationReport& report);
/// Throws FormatError.
ExplanationReport report_from_json(const nlohmann::json& doc);

/// Canonical edges of the reports that never occur in `graph` before `before`.
/// Markdown rationales call these rare.
std::set<EdgeKey> unseen_edges(const TemporalGraph& graph, Timestamp before,
                               std::span<const ExplanationReport> reports);

/// Analyst summary for all windows. Labels come from `labels`, then the
/// report's own map, then the numeric id (with a warning line).
std::string emit_markdown(std::span<const ExplanationReport> reports, const LabelMap& labels = {},
                          const std::set<EdgeKey>& rare = {});

/// DOT digraph of `subgraph` restricted to the report's window. Each edge is
/// styled by the highest importance any explanation gave its canonical edge.
std::string emit_graph_description(const ExplanationReport& report, const AttackSubgraph& subgraph,
                                   const LabelMap& labels = {});

struct ReportBundle {
    std::vector<std::pair<std::string, nlohmann::json>> json_documents; ///< file name, document
    std::string markdown;
    std::vector<std::pair<std::string, std::string>> graph_descriptions; ///< file name, DOT text
};

ReportBundle make_bundle(std::span<const ExplanationReport> reports, const AttackSubgraph& subgraph,
                         const LabelMap& labels = {}, const std::set<EdgeKey>& rare = {});

/// Writes explanations_<window>.json, summary.md and window_<n>.gv into `dir`,
/// creating it if needed. Returns the written paths.
std::vector<std::filesystem::path> write_bundle(const ReportBundle& bundle, const std::filesystem::path& dir);

} // namespace provlens
