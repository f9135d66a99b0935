#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "provlens/types.hpp"

namespace provlens {

struct NodeDescriptor {
    NodeId node_id = 0;
    NodeKind kind = NodeKind::Process;
    std::string label;

    bool operator==(const NodeDescriptor&) const = default;
};

struct Event {
    NodeId src = 0;
    NodeId dst = 0;
    Relation relation = Relation::Read;
    Timestamp timestamp = 0;

    bool operator==(const Event&) const = default;
};

/// Canonical (src, dst, relation) identity of an edge, used for aggregation
/// and ablation. Timestamps are dropped.
struct EdgeKey {
    NodeId src = 0;
    NodeId dst = 0;
    Relation relation = Relation::Read;

    auto operator<=>(const EdgeKey&) const = default;
    bool operator==(const EdgeKey&) const = default;
};

inline EdgeKey key_of(const Event& e) { return {e.src, e.dst, e.relation}; }

using NodeMap = std::map<NodeId, NodeDescriptor>;

/// Memory snapshot of one node taken just before the target event.
struct NodeState {
    NodeId node = 0;
    NodeKind kind = NodeKind::Process;
    std::vector<double> memory;
    std::optional<Timestamp> last_update;

    bool operator==(const NodeState&) const = default;
};

/// One event with its causal neighborhood; the unit every explainer consumes.
///
/// `neighborhood[i]` is the event at stream position `neighborhood_index[i]`.
/// `node_states` holds the target endpoints (src first, then dst); their
/// memory vectors stay empty until a model has evaluated the context.
struct EventContext {
    Event target;
    std::size_t target_index = 0;
    std::vector<Event> neighborhood;
    std::vector<std::size_t> neighborhood_index;
    std::vector<NodeState> node_states;
    double loss = 0.0;
    TruthLabel truth_label = TruthLabel::Unknown;

    bool operator==(const EventContext&) const = default;
};

struct ContextOptions {
    int hops = 1;
    std::size_t horizon = 10;

    bool operator==(const ContextOptions&) const = default;
};

/// Append-only typed temporal provenance graph.
///
/// Events are kept in non-decreasing timestamp order; every event index is
/// listed under both endpoints in the adjacency index (once for self-loops).
/// Single writer during construction; read-only use is thread-safe.
class TemporalGraph {
public:
    /// Throws ArgumentError on a duplicate id or empty label.
    void add_node(NodeDescriptor node);

    /// Throws OrderingError when `e` is older than the last event and
    /// ArgumentError when an endpoint is unknown.
    void append_event(const Event& e);

    bool has_node(NodeId id) const { return index_.contains(id); }
    const NodeDescriptor& node(NodeId id) const;
    std::span<const NodeDescriptor> nodes() const { return nodes_; }
    std::span<const Event> events() const { return events_; }
    std::size_t num_events() const { return events_.size(); }

    /// Event indexes incident to `id`, ascending.
    std::span<const std::size_t> incident(NodeId id) const;

    /// Events with t0 <= timestamp < t1, in order.
    std::vector<Event> window_slice(Timestamp t0, Timestamp t1) const;

    /// Index range [first, last) of the events in [t0, t1).
    std::pair<std::size_t, std::size_t> window_range(Timestamp t0, Timestamp t1) const;

    /// Temporal k-hop neighborhood of the event at `event_index`.
    ///
    /// Per visited node, at most `horizon` of its most recent events that
    /// precede the target in stream order are taken; the target itself is
    /// excluded. Output is ordered by descending timestamp, then ascending
    /// event index. Endpoint memory and `loss` are left for the model to fill.
    EventContext extract_context(std::size_t event_index, const ContextOptions& options = {}) const;

    NodeMap node_map() const;

    bool operator==(const TemporalGraph& other) const {
        return nodes_ == other.nodes_ && events_ == other.events_;
    }

private:
    std::size_t slot(NodeId id) const;

    std::vector<NodeDescriptor> nodes_;
    std::unordered_map<NodeId, std::size_t> index_;
    std::vector<Event> events_;
    std::vector<std::vector<std::size_t>> adjacency_;
};

} // namespace provlens
