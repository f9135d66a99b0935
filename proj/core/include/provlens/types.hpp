#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace provlens {

using NodeId = std::int64_t;
/// Nanoseconds since the Unix epoch.
using Timestamp = std::int64_t;

inline constexpr Timestamp kNanosPerSecond = 1'000'000'000;
inline constexpr Timestamp kNanosPerMinute = 60 * kNanosPerSecond;

enum class NodeKind : std::uint8_t { Process, File, Socket };
inline constexpr std::size_t kNumNodeKinds = 3;

/// Event relation alphabet. The order is the decoder's class order and is
/// part of the checkpoint format.
enum class Relation : std::uint8_t {
    Read,
    Write,
    Execute,
    Open,
    Close,
    Connect,
    Send,
    Recv,
    Clone,
};
inline constexpr std::size_t kNumRelations = 9;

inline constexpr std::array<Relation, kNumRelations> kAllRelations = {
    Relation::Read,    Relation::Write, Relation::Execute, Relation::Open, Relation::Close,
    Relation::Connect, Relation::Send,  Relation::Recv,    Relation::Clone,
};

enum class TruthLabel : std::uint8_t { Benign, Malicious, Unknown };

// Upper-case names are used by the log format and the dataset file.
std::string_view to_string(NodeKind kind);
std::string_view to_string(Relation rel);
std::string_view to_string(TruthLabel label);

/// Short lower-case relation names used in explanation reports ("exec", "read").
std::string_view report_name(Relation rel);

std::optional<NodeKind> parse_node_kind(std::string_view text);
std::optional<Relation> parse_relation(std::string_view text);
std::optional<Relation> parse_report_relation(std::string_view text);
std::optional<TruthLabel> parse_truth_label(std::string_view text);

/// Comma-separated list of every relation name, for error messages.
std::string relation_alphabet();

constexpr std::size_t index_of(Relation rel) noexcept { return static_cast<std::size_t>(rel); }
constexpr std::size_t index_of(NodeKind kind) noexcept { return static_cast<std::size_t>(kind); }

} // namespace provlens
