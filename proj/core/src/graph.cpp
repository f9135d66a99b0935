#include "provlens/graph.hpp"

#include <algorithm>
#include <set>

#include "provlens/error.hpp"

namespace provlens {

void TemporalGraph::add_node(NodeDescriptor node) {
    if (node.label.empty()) {
        throw ArgumentError("node " + std::to_string(node.node_id) + " has an empty label");
    }
    if (index_.contains(node.node_id)) {
        throw ArgumentError("duplicate node id " + std::to_string(node.node_id));
    }
    index_.emplace(node.node_id, nodes_.size());
    nodes_.push_back(std::move(node));
    adjacency_.emplace_back();
}

void TemporalGraph::append_event(const Event& e) {
    if (!has_node(e.src) || !has_node(e.dst)) {
        throw ArgumentError("event references unknown node " +
                            std::to_string(has_node(e.src) ? e.dst : e.src));
    }
    if (!events_.empty() && e.timestamp < events_.back().timestamp) {
        throw OrderingError("event timestamp " + std::to_string(e.timestamp) +
                            " precedes last event at " + std::to_string(events_.back().timestamp));
    }
    const std::size_t idx = events_.size();
    events_.push_back(e);
    adjacency_[slot(e.src)].push_back(idx);
    if (e.dst != e.src) adjacency_[slot(e.dst)].push_back(idx);
}

std::size_t TemporalGraph::slot(NodeId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ArgumentError("unknown node " + std::to_string(id));
    return it->second;
}

const NodeDescriptor& TemporalGraph::node(NodeId id) const { return nodes_[slot(id)]; }

std::span<const std::size_t> TemporalGraph::incident(NodeId id) const {
    return adjacency_[slot(id)];
}

std::pair<std::size_t, std::size_t> TemporalGraph::window_range(Timestamp t0, Timestamp t1) const {
    if (t0 >= t1) {
        throw ArgumentError("window start " + std::to_string(t0) + " is not before end " +
                            std::to_string(t1));
    }
    auto by_time = [](const Event& e, Timestamp t) { return e.timestamp < t; };
    auto first = std::lower_bound(events_.begin(), events_.end(), t0, by_time);
    auto last = std::lower_bound(first, events_.end(), t1, by_time);
    return {static_cast<std::size_t>(first - events_.begin()),
            static_cast<std::size_t>(last - events_.begin())};
}

std::vector<Event> TemporalGraph::window_slice(Timestamp t0, Timestamp t1) const {
    auto [first, last] = window_range(t0, t1);
    return {events_.begin() + static_cast<std::ptrdiff_t>(first),
            events_.begin() + static_cast<std::ptrdiff_t>(last)};
}

EventContext TemporalGraph::extract_context(std::size_t event_index,
                                            const ContextOptions& options) const {
    if (event_index >= events_.size()) {
        throw RangeError("event index " + std::to_string(event_index) + " out of range [0, " +
                         std::to_string(events_.size()) + ")");
    }
    if (options.hops < 1 || options.horizon < 1) {
        throw ArgumentError("hops and horizon must be >= 1");
    }

    EventContext ctx;
    ctx.target = events_[event_index];
    ctx.target_index = event_index;
    ctx.node_states = {{ctx.target.src, node(ctx.target.src).kind, {}, std::nullopt},
                       {ctx.target.dst, node(ctx.target.dst).kind, {}, std::nullopt}};

    std::set<std::size_t> picked;
    std::set<NodeId> visited{ctx.target.src, ctx.target.dst};
    std::vector<NodeId> frontier{ctx.target.src};
    if (ctx.target.dst != ctx.target.src) frontier.push_back(ctx.target.dst);

    for (int hop = 0; hop < options.hops && !frontier.empty(); ++hop) {
        std::vector<NodeId> next;
        for (NodeId n : frontier) {
            const auto& adj = adjacency_[slot(n)];
            // Only events strictly before the target in stream order.
            auto end = std::lower_bound(adj.begin(), adj.end(), event_index);
            const auto available = static_cast<std::size_t>(end - adj.begin());
            const std::size_t take = std::min(available, options.horizon);
            for (auto it = end - static_cast<std::ptrdiff_t>(take); it != end; ++it) {
                if (!picked.insert(*it).second) continue;
                const Event& e = events_[*it];
                for (NodeId other : {e.src, e.dst}) {
                    if (visited.insert(other).second) next.push_back(other);
                }
            }
        }
        frontier = std::move(next);
    }

    std::vector<std::size_t> order(picked.begin(), picked.end());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return events_[a].timestamp > events_[b].timestamp;
    });
    ctx.neighborhood_index = order;
    ctx.neighborhood.reserve(order.size());
    for (std::size_t idx : order) ctx.neighborhood.push_back(events_[idx]);
    return ctx;
}

NodeMap TemporalGraph::node_map() const {
    NodeMap out;
    for (const auto& n : nodes_) out.emplace(n.node_id, n);
    return out;
}

} // namespace provlens
