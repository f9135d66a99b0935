#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "provlens/error.hpp"
#include "provlens/ingest.hpp"

namespace provlens {
namespace {

LabeledDataset parse(const std::string& text) {
    std::istringstream in(text);
    return parse_log(in);
}

TEST(ParseLog, EmptyStream) {
    const auto ds = parse("");
    EXPECT_EQ(ds.graph.num_events(), 0u);
    EXPECT_TRUE(ds.graph.nodes().empty());
    EXPECT_FALSE(ds.attack_interval);
}

TEST(ParseLog, SingleLine) {
    const auto ds = parse("PROCESS nginx EXECUTE PROCESS bash 1000\n");
    ASSERT_EQ(ds.graph.nodes().size(), 2u);
    ASSERT_EQ(ds.graph.num_events(), 1u);
    EXPECT_EQ(ds.graph.nodes()[0].label, "nginx");
    EXPECT_EQ(ds.graph.nodes()[1].label, "bash");
    EXPECT_EQ(ds.graph.events()[0], (Event{0, 1, Relation::Execute, 1000}));
    EXPECT_EQ(ds.labels[0], TruthLabel::Unknown);
}

TEST(ParseLog, UnknownRelationListsAlphabet) {
    try {
        parse("PROCESS a READ FILE /x 1\nPROCESS nginx FROB PROCESS bash 2\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_NE(std::string(e.what()).find("FROB"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("EXECUTE"), std::string::npos);
    }
}

TEST(ParseLog, MalformedLinesNameLineAndField) {
    EXPECT_THROW(parse("PROCESS a READ FILE\n"), ParseError);
    EXPECT_THROW(parse("PROCESS a READ FILE /x 12x\n"), ParseError);
    EXPECT_THROW(parse("DEVICE a READ FILE /x 1\n"), ParseError);
    EXPECT_THROW(parse("PROCESS a READ FILE /x 1 MAYBE\n"), ParseError);
    try {
        parse("# header\n\nPROCESS a READ FILE /x abc\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("timestamp"), std::string::npos);
    }
}

TEST(ParseLog, SortsByTimestampAndAssignsIdsInTimeOrder) {
    const auto ds = parse("PROCESS b WRITE FILE /y 20 MALICIOUS\nPROCESS a READ FILE /x 10 BENIGN\n");
    EXPECT_EQ(ds.graph.node(0).label, "a");
    EXPECT_EQ(ds.graph.node(2).label, "b");
    EXPECT_EQ(ds.graph.events()[0].timestamp, 10);
    EXPECT_EQ(ds.labels[0], TruthLabel::Benign);
    EXPECT_EQ(ds.labels[1], TruthLabel::Malicious);
    ASSERT_TRUE(ds.attack_interval);
    EXPECT_EQ(ds.attack_interval->first, 20);
}

ScenarioSpec attack_only() {
    ScenarioSpec s = default_scenario_spec();
    s.benign_templates.clear();
    return s;
}

TEST(GenerateScenario, AttackOnly) {
    const auto ds = generate_scenario(attack_only());
    ASSERT_EQ(ds.graph.num_events(), 4u);
    for (auto l : ds.labels) EXPECT_EQ(l, TruthLabel::Malicious);
    const auto e = ds.graph.events();
    EXPECT_EQ(e[0].relation, Relation::Execute);
    EXPECT_EQ(e[1].relation, Relation::Read);
    EXPECT_EQ(e[2].relation, Relation::Write);
    EXPECT_EQ(e[3].relation, Relation::Send);
}

TEST(GenerateScenario, DeterministicBytes) {
    const auto a = dataset_to_json(generate_scenario(default_scenario_spec())).dump();
    const auto b = dataset_to_json(generate_scenario(default_scenario_spec())).dump();
    EXPECT_EQ(a, b);
    ScenarioSpec other = default_scenario_spec();
    other.seed += 1;
    EXPECT_NE(a, dataset_to_json(generate_scenario(other)).dump());
}

TEST(GenerateScenario, DefaultDeskCounts) {
    const auto ds = generate_scenario(default_scenario_spec());
    std::size_t malicious = 0;
    for (auto l : ds.labels) malicious += l == TruthLabel::Malicious;
    EXPECT_EQ(malicious, 4u);
    // Three templates at 20 events/min for 60 minutes: about 3600 events.
    EXPECT_EQ(ds.graph.num_events(), 3598u);
    EXPECT_LT(static_cast<double>(malicious) / static_cast<double>(ds.graph.num_events()), 0.01);
}

TEST(GenerateScenario, OnlyChainEventsAreMalicious) {
    const ScenarioSpec spec = default_scenario_spec();
    const auto ds = generate_scenario(spec);
    const auto events = ds.graph.events();
    std::size_t step = 0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (ds.labels[i] != TruthLabel::Malicious) continue;
        ASSERT_LT(step, spec.attack_chain.size());
        const AttackStep& s = spec.attack_chain[step++];
        EXPECT_EQ(events[i].relation, s.relation);
        EXPECT_EQ(ds.graph.node(events[i].src).label, s.src_label);
        EXPECT_EQ(ds.graph.node(events[i].dst).label, s.dst_label);
    }
    EXPECT_EQ(step, spec.attack_chain.size());
}

TEST(GenerateScenario, InvalidSpecs) {
    ScenarioSpec late = attack_only();
    late.attack_chain.back().offset_seconds = late.duration_seconds + 1;
    EXPECT_THROW(generate_scenario(late), ArgumentError);
    ScenarioSpec unordered = attack_only();
    unordered.attack_chain[1].offset_seconds = unordered.attack_chain[0].offset_seconds;
    EXPECT_THROW(generate_scenario(unordered), ArgumentError);
    ScenarioSpec rate = default_scenario_spec();
    rate.benign_templates[0].rate_per_minute = 0;
    EXPECT_THROW(generate_scenario(rate), ArgumentError);
}

TEST(LogFormat, RenderParseRoundTrip) {
    const auto ds = generate_scenario(default_scenario_spec());
    std::istringstream in(render_log(ds));
    EXPECT_EQ(parse_log(in), ds);
}

class DatasetFile : public ::testing::Test {
protected:
    std::filesystem::path path = std::filesystem::temp_directory_path() /
                                 ("provlens_ds_" + std::to_string(::getpid()) + ".json");
    void TearDown() override { std::filesystem::remove(path); }
};

TEST_F(DatasetFile, SaveLoadRoundTrip) {
    const auto ds = generate_scenario(default_scenario_spec());
    save_dataset(ds, path);
    EXPECT_EQ(load_dataset(path), ds);
}

TEST_F(DatasetFile, MissingPath) { EXPECT_THROW(load_dataset(path.string() + ".nope"), NotFoundError); }

TEST_F(DatasetFile, BumpedVersion) {
    auto doc = dataset_to_json(generate_scenario(attack_only()));
    doc["version"] = kDatasetVersion + 1;
    std::ofstream(path) << doc.dump();
    EXPECT_THROW(load_dataset(path), VersionError);
}

TEST_F(DatasetFile, Corrupt) {
    std::ofstream(path) << "{\"version\": 1, \"nodes\": [";
    EXPECT_THROW(load_dataset(path), FormatError);
}

} // namespace
} // namespace provlens
