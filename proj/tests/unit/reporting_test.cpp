#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>

#include "provlens/error.hpp"
#include "provlens/reporting.hpp"
#include "support.hpp"

namespace provlens {
namespace {

constexpr Timestamp at(int h, int m, int s = 0) {
    // 2018-04-06T00:00:00Z
    return (1'522'972'800LL + h * 3600LL + m * 60LL + s) * kNanosPerSecond;
}

TEST(Bands, Boundaries) {
    EXPECT_EQ(band_of(0.85), ImportanceBand::Critical);
    EXPECT_EQ(band_of(0.7000001), ImportanceBand::Critical);
    EXPECT_EQ(band_of(0.7), ImportanceBand::Moderate);
    EXPECT_EQ(band_of(0.30), ImportanceBand::Moderate);
    EXPECT_EQ(band_of(0.2999999), ImportanceBand::Irrelevant);
    EXPECT_EQ(band_of(0.0), ImportanceBand::Irrelevant);
    EXPECT_EQ(to_string(ImportanceBand::Moderate), "moderate");
}

TEST(WindowText, FormatAndParse) {
    const TimeWindow w{at(11, 0), at(11, 15)};
    EXPECT_EQ(format_window(w), "2018-04-06T11:00:00-11:15:00");
    EXPECT_EQ(window_file_stem(w), "20180406T110000-111500");
    EXPECT_EQ(parse_window("2018-04-06T11:00:00-11:15:00"), w);
    const TimeWindow midnight{at(23, 45), at(24, 0)};
    EXPECT_EQ(format_window(midnight), "2018-04-06T23:45:00-00:00:00");
    EXPECT_EQ(parse_window(format_window(midnight)), midnight);
}

TEST(WindowText, MalformedInputThrows) {
    EXPECT_THROW(parse_window(""), FormatError);
    EXPECT_THROW(parse_window("2018-04-06T11:00:00"), FormatError);
    EXPECT_THROW(parse_window("2018-04-06 11:00:00-11:15:00"), FormatError);
    EXPECT_THROW(parse_window("2018-04-06T11:00:00-11:15:00Z"), FormatError);
}

ExplanationReport sample_report() {
    ExplanationReport r;
    r.window = {at(11, 0), at(11, 15)};
    r.num_events = 42;
    r.threshold = 0.25;
    r.graphmask = {{1, 2, Relation::Execute, 0.85, 2}, {2, 3, Relation::Read, 0.1, 1}};
    NodeBlock b;
    b.node_id = 2;
    b.score = 9.5;
    b.gnn = {{17, 0.9, 0.05, {{1, 2, Relation::Execute, 0.85}, {2, 3, Relation::Read, 0.4}}}};
    b.vatg_events = {{17, {{1, 2, Relation::Execute, 0.6}, {2, 3, Relation::Read, 0.2}}}};
    b.vatg_aggregate = {{1, 2, Relation::Execute, 0.6, 0.0}, {2, 3, Relation::Read, 0.2, 0.0}};
    r.nodes = {b};
    r.skipped = {{18, "gnn", "no-neighborhood"}};
    r.labels = {{1, "nginx"}, {2, "bash"}, {3, "/etc/passwd"}};
    return r;
}

TEST(Json, RoundTrip) {
    const auto r = sample_report();
    const auto doc = emit_json(r);
    EXPECT_EQ(report_from_json(doc), r);
    EXPECT_EQ(report_from_json(nlohmann::json::parse(doc.dump())), r);
    EXPECT_EQ(doc["window"], "2018-04-06T11:00:00-11:15:00");
    EXPECT_EQ(doc["nodes"][0]["gnn"][0]["top_edges"][0]["rel"], "exec");
    EXPECT_EQ(doc["graphmask"]["aggregate"][0]["relation"], "exec");
}

TEST(Json, MinimalReportHasEveryKey) {
    ExplanationReport r;
    r.window = {at(11, 0), at(11, 15)};
    const auto doc = emit_json(r);
    for (const char* key : {"window", "num_events", "threshold", "graphmask", "nodes"}) {
        EXPECT_TRUE(doc.contains(key)) << key;
    }
    EXPECT_TRUE(doc["graphmask"]["aggregate"].is_array());
    EXPECT_TRUE(doc["nodes"].is_array());
    EXPECT_EQ(report_from_json(doc), r);
}

TEST(Json, MalformedDocumentsThrow) {
    auto doc = emit_json(sample_report());
    doc["nodes"][0]["gnn"][0]["top_edges"][0]["rel"] = "teleport";
    EXPECT_THROW(report_from_json(doc), FormatError);
    EXPECT_THROW(report_from_json(nlohmann::json::object()), FormatError);
    EXPECT_THROW(report_from_json({{"window", "yesterday"}}), FormatError);
}

TEST(Markdown, CriticalEdgeRationale) {
    const ExplanationReport reports[] = {sample_report()};
    const auto md = emit_markdown(reports);
    EXPECT_NE(md.find("# Explanation summary"), std::string::npos);
    EXPECT_NE(md.find("## Window 0: 2018-04-06T11:00:00-11:15:00"), std::string::npos);
    EXPECT_NE(md.find("Edge (nginx → bash, exec) — critical: critical to the alert"), std::string::npos);
    EXPECT_NE(md.find("Edge (bash → /etc/passwd, read) — irrelevant"), std::string::npos);
    EXPECT_NE(md.find("### Node bash (id 2)"), std::string::npos);
    EXPECT_EQ(md.find("warning"), std::string::npos);
    EXPECT_EQ(md, emit_markdown(reports));
}

TEST(Markdown, RareEdgesAreCalledOut) {
    const ExplanationReport reports[] = {sample_report()};
    const std::set<EdgeKey> rare = {{1, 2, Relation::Execute}};
    const auto md = emit_markdown(reports, {}, rare);
    EXPECT_NE(md.find("critical to the alert; rare event"), std::string::npos);
    EXPECT_EQ(md.find("little influence on the alert; rare"), std::string::npos);
}

TEST(Markdown, EmptyNodesAndMissingLabels) {
    auto r = sample_report();
    r.nodes.clear();
    r.labels.erase(3);
    const ExplanationReport reports[] = {r};
    const auto md = emit_markdown(reports);
    EXPECT_NE(md.find("No explainable nodes in this window."), std::string::npos);
    EXPECT_NE(md.find("> warning: no label for node 3; showing its id"), std::string::npos);
    EXPECT_NE(md.find("Edge (bash → 3, read)"), std::string::npos);
    EXPECT_NE(emit_markdown({}).find("No alert windows were explained."), std::string::npos);
}

TEST(Markdown, ExplicitLabelsWin) {
    const ExplanationReport reports[] = {sample_report()};
    const auto md = emit_markdown(reports, {{2, "sh"}});
    EXPECT_NE(md.find("Edge (nginx → sh, exec)"), std::string::npos);
}

TEST(GraphDescription, StylesEdgesByImportance) {
    ExplanationReport r;
    r.window = {at(11, 0), at(11, 15)};
    r.graphmask = {{1, 2, Relation::Execute, 0.85, 1}};
    r.labels = {{1, "nginx"}, {2, "bash"}, {3, "/tmp/x"}};
    AttackSubgraph sub;
    sub.nodes = {1, 2, 3};
    sub.events = {{1, 2, Relation::Execute, at(11, 1)}, {2, 3, Relation::Write, at(11, 2)}, {2, 3, Relation::Write, at(12, 0)}};
    sub.event_indexes = {7, 9, 30};
    const auto dot = emit_graph_description(r, sub);
    EXPECT_NE(dot.find("rankdir=LR"), std::string::npos);
    EXPECT_NE(dot.find("n1 [label=\"nginx\"]"), std::string::npos);
    EXPECT_NE(dot.find("n1 -> n2 [label=\"exec 0.85\", color=red, penwidth=3, tooltip=\"event 7\"]"),
              std::string::npos);
    EXPECT_NE(dot.find("n2 -> n3 [label=\"write 0.00\", color=gray, penwidth=1, tooltip=\"event 9\"]"),
              std::string::npos);
    EXPECT_EQ(dot.find("event 30"), std::string::npos);
    const std::regex edge(R"(n\d+ -> n\d+)");
    EXPECT_EQ(std::distance(std::sregex_iterator(dot.begin(), dot.end(), edge), std::sregex_iterator()), 2);
    EXPECT_EQ(dot, emit_graph_description(r, sub));
}

TEST(Bundle, WritesEveryArtifact) {
    const ExplanationReport reports[] = {sample_report()};
    AttackSubgraph sub;
    sub.nodes = {1, 2};
    const auto bundle = make_bundle(reports, sub);
    const auto dir = std::filesystem::temp_directory_path() / ("provlens_bundle_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    const auto written = write_bundle(bundle, dir);
    EXPECT_EQ(written.size(), 3u);
    EXPECT_TRUE(std::filesystem::exists(dir / "explanations_20180406T110000-111500.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "summary.md"));
    EXPECT_TRUE(std::filesystem::exists(dir / "window_0.gv"));
    std::ifstream in(dir / "explanations_20180406T110000-111500.json");
    EXPECT_EQ(report_from_json(nlohmann::json::parse(in)), reports[0]);
    std::filesystem::remove_all(dir);
}

TEST(ReportingScenario, ExplainedAttackEdgesAreHighlighted) {
    const auto& run = testing::default_run();
    const auto& result = testing::default_explanations();
    const auto window = run.attack_window();
    const ExplanationReport* report = nullptr;
    for (const auto& r : result.reports) {
        if (r.window == window) report = &r;
    }
    ASSERT_NE(report, nullptr);
    std::set<EdgeKey> explained;
    for (const auto& g : report->graphmask) explained.insert({g.src, g.dst, g.relation});
    const auto dot = emit_graph_description(*report, reconstruct_subgraph(run.raised_alert(), run.ds.graph));
    const auto events = run.ds.graph.events();
    int styled = 0;
    for (auto idx : run.malicious_indexes()) {
        if (!window.contains(events[idx].timestamp) || !explained.contains(key_of(events[idx]))) continue;
        const auto pos = dot.find("tooltip=\"event " + std::to_string(idx) + "\"");
        ASSERT_NE(pos, std::string::npos) << "event " << idx;
        const auto start = dot.rfind('\n', pos) + 1;
        const auto line = dot.substr(start, pos - start);
        EXPECT_EQ(line.find("color=gray"), std::string::npos) << line;
        ++styled;
    }
    EXPECT_GE(styled, 3);
}

} // namespace
} // namespace provlens
