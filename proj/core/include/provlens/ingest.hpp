#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "provlens/graph.hpp"

namespace provlens {

/// A graph plus per-event ground truth.
struct LabeledDataset {
    TemporalGraph graph;
    std::vector<TruthLabel> labels;
    /// [first, last] timestamps of MALICIOUS events, when any exist.
    std::optional<std::pair<Timestamp, Timestamp>> attack_interval;

    NodeMap node_map() const { return graph.node_map(); }
    bool operator==(const LabeledDataset&) const = default;
};

/// Target objects for one relation of a behavior. An empty `labels` list means
/// every draw creates a fresh object named `fresh_prefix` + counter.
struct ObjectPool {
    NodeKind kind = NodeKind::File;
    std::vector<std::string> labels;
    std::string fresh_prefix;
};

struct ScriptStep {
    Relation relation = Relation::Read;
    ObjectPool objects;
    double delay_seconds = 1.0;
};

/// One entry of a template's relation mix.
///
/// When the target pool is a fresh PROCESS, the new process then runs
/// `child_script`. With `log_spawn` false the spawn edge itself is not
/// recorded, so the child appears without a parent edge.
struct Behavior {
    Relation relation = Relation::Read;
    double weight = 1.0;
    ObjectPool objects;
    std::vector<ScriptStep> child_script;
    bool log_spawn = true;
};

struct BenignTemplate {
    std::string process_label;
    std::vector<Behavior> mix;
    /// Expected events per minute, counting child-script events.
    double rate_per_minute = 20.0;
};

struct AttackStep {
    NodeKind src_kind = NodeKind::Process;
    std::string src_label;
    NodeKind dst_kind = NodeKind::Process;
    std::string dst_label;
    Relation relation = Relation::Execute;
    double offset_seconds = 0.0;
};

struct ScenarioSpec {
    Timestamp start = 0;
    double duration_seconds = 3600.0;
    std::vector<BenignTemplate> benign_templates;
    std::vector<AttackStep> attack_chain;
    std::uint64_t seed = 7;
};

/// Webserver-spawned-shell scenario: 60 minutes, nginx/sshd/cron templates at
/// 20 events/min, and a 4-step chain (EXECUTE, READ, WRITE, SEND) 45 minutes in.
ScenarioSpec default_scenario_spec();

/// Parses `<src_kind> <src_label> <relation> <dst_kind> <dst_label> <timestamp_ns> [truth]`.
/// Blank lines and lines starting with '#' are skipped.
/// Throws ParseError (line number and field) on malformed input.
LabeledDataset parse_log(std::istream& lines);

/// Inverse of parse_log: one line per event, truth label as the 7th field.
std::string render_log(const LabeledDataset& ds);

/// Throws ArgumentError for an invalid spec (offsets not increasing, offset
/// beyond duration, non-positive rates).
LabeledDataset generate_scenario(const ScenarioSpec& spec);

inline constexpr int kDatasetVersion = 1;

nlohmann::json dataset_to_json(const LabeledDataset& ds);
/// Throws VersionError or FormatError.
LabeledDataset dataset_from_json(const nlohmann::json& doc);

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
/// Throws NotFoundError, VersionError or FormatError.
LabeledDataset load_dataset(const std::filesystem::path& path);

} // namespace provlens
