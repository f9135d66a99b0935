#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "provlens/detector.hpp"
#include "provlens/gnn_explainer.hpp"
#include "provlens/graphmask.hpp"
#include "provlens/vatg.hpp"

namespace provlens {

struct PipelineConfig {
    Timestamp window_length = 15 * kNanosPerMinute;
    std::size_t top_k_events = 25;
    std::size_t top_m_nodes = 20;
    std::size_t memory_budget = std::size_t{1} << 30; ///< bytes
    std::size_t parallel_windows = 1;
    std::size_t context_batch = 64;
    bool use_cache = true;
    std::uint64_t seed = 0;
    GraphMaskConfig graphmask;
    GnnExplainerConfig gnn;
    VatgConfig vatg; ///< its seed is replaced by `seed`

    void validate() const;
};

/// Environment variable that overrides PipelineConfig::memory_budget (bytes).
inline constexpr const char* kMemoryBudgetEnv = "PROVLENS_MEMORY_BUDGET";

/// Applies the environment override, if set. Throws ArgumentError when the
/// variable is not a positive integer.
void apply_environment(PipelineConfig& config);

// --- report data; mirrors the JSON document field for field ---------------

struct ReportEdge {
    NodeId src = 0;
    NodeId dst = 0;
    Relation relation = Relation::Read;
    double value = 0.0;

    bool operator==(const ReportEdge&) const = default;
};

struct GraphMaskRow {
    NodeId src = 0;
    NodeId dst = 0;
    Relation relation = Relation::Read;
    double weight = 0.0;
    std::size_t count = 0;

    bool operator==(const GraphMaskRow&) const = default;
};

struct GnnRecord {
    std::size_t event_index = 0;
    double comprehensiveness = 0.0;
    double sufficiency = 0.0;
    std::vector<ReportEdge> top_edges;

    bool operator==(const GnnRecord&) const = default;
};

struct VatgEventRecord {
    std::size_t event_index = 0;
    std::vector<ReportEdge> edges; ///< every neighborhood edge, descending importance

    bool operator==(const VatgEventRecord&) const = default;
};

struct VatgAggregateRow {
    NodeId src = 0;
    NodeId dst = 0;
    Relation relation = Relation::Read;
    double mean = 0.0;
    double var = 0.0;

    bool operator==(const VatgAggregateRow&) const = default;
};

struct NodeBlock {
    NodeId node_id = 0;
    double score = 0.0;
    std::vector<GnnRecord> gnn;
    std::vector<VatgEventRecord> vatg_events;
    std::vector<VatgAggregateRow> vatg_aggregate;

    bool operator==(const NodeBlock&) const = default;
};

struct SkippedEvent {
    std::size_t event_index = 0;
    std::string method;
    std::string reason;

    bool operator==(const SkippedEvent&) const = default;
};

struct ExplanationReport {
    TimeWindow window;
    std::size_t num_events = 0;
    double threshold = 0.0;
    std::vector<GraphMaskRow> graphmask;
    std::vector<NodeBlock> nodes; ///< descending score
    std::vector<SkippedEvent> skipped;
    std::map<NodeId, std::string> labels;

    bool operator==(const ExplanationReport&) const = default;
};

struct PipelineResult {
    std::vector<ExplanationReport> reports; ///< one per alert window, in time order
    std::vector<std::string> warnings;
    bool degraded = false;
};

// --- building blocks -------------------------------------------------------

/// Top-K by descending loss; ties by earlier timestamp, then lower index.
/// Returns positions into `events`.
std::vector<std::size_t> select_high_loss(std::span<const Event> events, std::span<const double> losses,
                                          std::size_t k);

enum class MemoryDecision { Proceed, Degrade };

/// Proceed when `estimated_need` fits; degrade when the fully degraded need
/// (`minimal_need`) fits. Throws ResourceError otherwise.
MemoryDecision ensure_memory(std::size_t budget, std::size_t estimated_need, std::size_t minimal_need);

/// Rough footprint of one evaluated context.
std::size_t context_bytes(const EventContext& ctx);
std::size_t estimate_context_bytes(const ContextOptions& options, std::size_t memory_dim);

/// Window-keyed LRU cache of evaluated contexts. Thread-safe.
class ContextCache {
public:
    using Contexts = std::vector<EventContext>;
    using Loader = std::function<Contexts()>;

    explicit ContextCache(std::size_t budget_bytes) : budget_(budget_bytes) {}

    /// Returns the cached contexts for `window`, loading them on a miss.
    std::shared_ptr<const Contexts> get_or_load(TimeWindow window, const Loader& load);

    std::size_t size_bytes() const;
    std::size_t entries() const;
    std::size_t hits() const;
    std::size_t misses() const;

private:
    struct Entry {
        std::shared_ptr<const Contexts> contexts;
        std::size_t bytes = 0;
        std::list<TimeWindow>::iterator lru;
    };
    void evict_locked();

    mutable std::mutex mu_;
    std::size_t budget_;
    std::size_t bytes_ = 0;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
    std::map<TimeWindow, Entry> entries_;
    std::list<TimeWindow> order_; ///< most recent first
};

/// Explains every window of `alert`. Post-hoc: neither the model nor the graph
/// is modified. Throws ArgumentError for an alert without windows and
/// ResourceError when even a degraded run does not fit the memory budget.
PipelineResult run_pipeline(const TgnModel& model, const TemporalGraph& graph, const Alert& alert,
                            const WindowStats& stats, const PipelineConfig& config = {},
                            ContextCache* cache = nullptr);

// --- configuration file ----------------------------------------------------

/// Everything a run needs, loadable from one JSON file. Missing keys keep
/// their defaults.
struct RunConfig {
    ModelConfig model;
    DetectorConfig detector;
    PipelineConfig pipeline;
};

RunConfig run_config_from_json(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& config);
/// Throws NotFoundError or FormatError.
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace provlens
