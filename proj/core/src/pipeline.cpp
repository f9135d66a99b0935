#include "provlens/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#include "provlens/error.hpp"

namespace provlens {

using json = nlohmann::json;

void PipelineConfig::validate() const {
    if (window_length <= 0) throw ArgumentError("window length must be positive");
    if (window_length % kNanosPerSecond != 0 || window_length > 24 * 60 * kNanosPerMinute) {
        throw ArgumentError("window length must be whole seconds and at most 24 hours");
    }
    if (top_k_events < 1 || top_m_nodes < 1) throw ArgumentError("top_k_events and top_m_nodes must be >= 1");
    if (memory_budget == 0) throw ArgumentError("memory budget must be positive");
    if (parallel_windows < 1 || context_batch < 1) {
        throw ArgumentError("parallel_windows and context_batch must be >= 1");
    }
    graphmask.validate();
    gnn.validate();
    vatg.validate();
}

void apply_environment(PipelineConfig& config) {
    const char* raw = std::getenv(kMemoryBudgetEnv);
    if (raw == nullptr || *raw == '\0') return;
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(raw, &end, 10);
    if (errno != 0 || end == raw || *end != '\0' || v == 0 || raw[0] == '-') {
        throw ArgumentError(std::string(kMemoryBudgetEnv) + " must be a positive byte count, got '" + raw + "'");
    }
    config.memory_budget = static_cast<std::size_t>(v);
}

std::vector<std::size_t> select_high_loss(std::span<const Event> events, std::span<const double> losses,
                                          std::size_t k) {
    if (events.size() != losses.size()) {
        throw ArgumentError("select_high_loss: " + std::to_string(events.size()) + " events but " +
                            std::to_string(losses.size()) + " losses");
    }
    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (losses[a] != losses[b]) return losses[a] > losses[b];
        return events[a].timestamp < events[b].timestamp;
    });
    order.resize(std::min(k, order.size()));
    return order;
}

MemoryDecision ensure_memory(std::size_t budget, std::size_t estimated_need, std::size_t minimal_need) {
    if (estimated_need <= budget) return MemoryDecision::Proceed;
    if (minimal_need <= budget) return MemoryDecision::Degrade;
    throw ResourceError("explanation needs about " + std::to_string(minimal_need) + " bytes even when degraded, " +
                        "budget is " + std::to_string(budget) + "; use a shorter window or a smaller top-K");
}

std::size_t context_bytes(const EventContext& ctx) {
    std::size_t bytes = sizeof(EventContext);
    bytes += ctx.neighborhood.capacity() * sizeof(Event);
    bytes += ctx.neighborhood_index.capacity() * sizeof(std::size_t);
    for (const auto& st : ctx.node_states) bytes += sizeof(NodeState) + st.memory.capacity() * sizeof(double);
    return bytes;
}

std::size_t estimate_context_bytes(const ContextOptions& options, std::size_t memory_dim) {
    // Both endpoints contribute up to `horizon` edges per hop.
    const std::size_t edges = 2 * options.horizon * static_cast<std::size_t>(options.hops);
    return sizeof(EventContext) + edges * (sizeof(Event) + sizeof(std::size_t)) +
           2 * (sizeof(NodeState) + memory_dim * sizeof(double));
}

// ---------------------------------------------------------------------------
// ContextCache

std::shared_ptr<const ContextCache::Contexts> ContextCache::get_or_load(TimeWindow window, const Loader& load) {
    {
        std::lock_guard lock(mu_);
        auto it = entries_.find(window);
        if (it != entries_.end()) {
            ++hits_;
            order_.splice(order_.begin(), order_, it->second.lru);
            return it->second.contexts;
        }
        ++misses_;
    }
    // Load outside the lock; a concurrent loader of the same window produces
    // identical contexts, and the first insert wins.
    auto loaded = std::make_shared<const Contexts>(load());
    std::size_t bytes = 0;
    for (const auto& c : *loaded) bytes += context_bytes(c);

    std::lock_guard lock(mu_);
    auto it = entries_.find(window);
    if (it != entries_.end()) return it->second.contexts;
    if (bytes > budget_) return loaded;
    order_.push_front(window);
    entries_.emplace(window, Entry{loaded, bytes, order_.begin()});
    bytes_ += bytes;
    evict_locked();
    return loaded;
}

void ContextCache::evict_locked() {
    while (bytes_ > budget_ && !order_.empty()) {
        const TimeWindow victim = order_.back();
        order_.pop_back();
        auto it = entries_.find(victim);
        bytes_ -= it->second.bytes;
        entries_.erase(it);
    }
}

std::size_t ContextCache::size_bytes() const {
    std::lock_guard lock(mu_);
    return bytes_;
}
std::size_t ContextCache::entries() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}
std::size_t ContextCache::hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}
std::size_t ContextCache::misses() const {
    std::lock_guard lock(mu_);
    return misses_;
}

// ---------------------------------------------------------------------------
// run_pipeline

namespace {

struct EventResults {
    std::optional<EventExplanation> gnn;
    std::optional<VatgExplanation> vatg;
};

ReportEdge report_edge(const EdgeKey& k, double v) { return {k.src, k.dst, k.relation, v}; }

ExplanationReport explain_window(const TgnModel& model, const TemporalGraph& graph, TimeWindow window,
                                 const ContextCache::Contexts& contexts, const WindowStats& stats,
                                 const PipelineConfig& config, std::size_t batch) {
    ExplanationReport report;
    report.window = window;
    const auto [first, last] = graph.window_range(window.t0, window.t1);
    report.num_events = last - first;
    report.threshold = stats.threshold;

    std::vector<const EventContext*> flagged;
    for (const auto& c : contexts) {
        if (c.loss > stats.threshold) flagged.push_back(&c);
    }
    std::vector<Event> events;
    std::vector<double> losses;
    for (const auto* c : flagged) {
        events.push_back(c->target);
        losses.push_back(c->loss);
    }
    std::vector<const EventContext*> top;
    for (std::size_t pos : select_high_loss(events, losses, config.top_k_events)) top.push_back(flagged[pos]);

    // GraphMask over the top-K events, in batches.
    std::vector<EdgeMask> masks;
    std::vector<const EventContext*> masked_ctx;
    masks.reserve(top.size());
    for (std::size_t start = 0; start < top.size(); start += batch) {
        const std::size_t stop = std::min(top.size(), start + batch);
        for (std::size_t i = start; i < stop; ++i) {
            auto m = graphmask_explain_event(model, *top[i], config.graphmask);
            if (!m) {
                report.skipped.push_back({top[i]->target_index, "graphmask", "no-neighborhood"});
                continue;
            }
            masks.push_back(std::move(*m));
            masked_ctx.push_back(top[i]);
        }
    }
    if (!masks.empty()) {
        std::vector<MaskedContext> mcs;
        for (std::size_t i = 0; i < masks.size(); ++i) mcs.push_back({masked_ctx[i], &masks[i]});
        for (const auto& e : graphmask_aggregate(mcs).edges) {
            report.graphmask.push_back({e.edge.src, e.edge.dst, e.edge.relation, e.weight, e.count});
        }
    }

    // Node scores over all flagged events; top-M nodes.
    std::map<NodeId, double> scores;
    for (const auto* c : flagged) {
        scores[c->target.src] += c->loss;
        if (c->target.dst != c->target.src) scores[c->target.dst] += c->loss;
    }
    std::vector<std::pair<NodeId, double>> ranked(scores.begin(), scores.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > config.top_m_nodes) ranked.resize(config.top_m_nodes);

    GnnExplainerConfig gnn_cfg = config.gnn;
    VatgConfig vatg_cfg = config.vatg;
    vatg_cfg.seed = config.seed;
    std::map<std::size_t, EventResults> memo;

    std::vector<const EventContext*> by_index = top;
    std::sort(by_index.begin(), by_index.end(),
              [](const EventContext* a, const EventContext* b) { return a->target_index < b->target_index; });

    for (const auto& [node, score] : ranked) {
        NodeBlock block;
        block.node_id = node;
        block.score = score;
        std::vector<ExplainedContext> explained;
        for (const EventContext* c : by_index) {
            if (c->target.src != node && c->target.dst != node) continue;
            auto [it, fresh] = memo.try_emplace(c->target_index);
            if (fresh) {
                it->second.gnn = gnn_explain_event(model, *c, gnn_cfg);
                it->second.vatg = vatg_explain_event(model, *c, vatg_cfg);
                if (!it->second.gnn) {
                    report.skipped.push_back({c->target_index, "gnn", "no-neighborhood"});
                    report.skipped.push_back({c->target_index, "va_tg", "no-neighborhood"});
                }
            }
            const EventResults& r = it->second;
            if (r.gnn) {
                GnnRecord rec{c->target_index, r.gnn->fidelity.comprehensiveness, r.gnn->fidelity.sufficiency, {}};
                for (const auto& e : r.gnn->top_edges) rec.top_edges.push_back(report_edge(e.edge, e.importance));
                block.gnn.push_back(std::move(rec));
            }
            if (r.vatg) {
                VatgEventRecord rec{c->target_index, {}};
                for (std::size_t pos : top_positions(r.vatg->importance, r.vatg->importance.size())) {
                    rec.edges.push_back(report_edge(key_of(c->neighborhood[pos]), r.vatg->importance[pos]));
                }
                block.vatg_events.push_back(std::move(rec));
                explained.push_back({c, &*r.vatg});
            }
        }
        if (!explained.empty()) {
            for (const auto& e : vatg_aggregate_node(explained).edges) {
                block.vatg_aggregate.push_back({e.edge.src, e.edge.dst, e.edge.relation, e.mean, e.var});
            }
        }
        report.nodes.push_back(std::move(block));
    }
    std::sort(report.skipped.begin(), report.skipped.end(), [](const SkippedEvent& a, const SkippedEvent& b) {
        return std::tie(a.event_index, a.method) < std::tie(b.event_index, b.method);
    });

    auto note = [&](NodeId id) { report.labels.emplace(id, graph.node(id).label); };
    for (const auto& r : report.graphmask) {
        note(r.src);
        note(r.dst);
    }
    for (const auto& b : report.nodes) {
        note(b.node_id);
        for (const auto& g : b.gnn) {
            for (const auto& e : g.top_edges) {
                note(e.src);
                note(e.dst);
            }
        }
        for (const auto& v : b.vatg_events) {
            for (const auto& e : v.edges) {
                note(e.src);
                note(e.dst);
            }
        }
    }
    return report;
}

} // namespace

PipelineResult run_pipeline(const TgnModel& model, const TemporalGraph& graph, const Alert& alert,
                            const WindowStats& stats, const PipelineConfig& config, ContextCache* cache) {
    config.validate();
    if (alert.windows.empty()) throw ArgumentError("alert has no windows to explain");

    PipelineResult result;
    const std::size_t first_scored = first_unseen_index(model, graph);
    std::size_t largest = 0;
    for (const auto& w : alert.windows) {
        const auto [first, last] = graph.window_range(w.t0, w.t1);
        largest = std::max(largest, last - std::max(first, std::min(first_scored, last)));
    }
    const std::size_t per_ctx = estimate_context_bytes(model.config().context, model.config().memory_dim);
    auto need = [&](std::size_t parallel, std::size_t batch) { return parallel * (largest + batch) * per_ctx; };

    std::size_t parallel = std::min(config.parallel_windows, alert.windows.size());
    std::size_t batch = config.context_batch;
    if (ensure_memory(config.memory_budget, need(parallel, batch), need(1, 1)) == MemoryDecision::Degrade) {
        parallel = 1;
        do {
            batch = std::max<std::size_t>(1, batch / 2);
        } while (batch > 1 && need(1, batch) > config.memory_budget);
        result.degraded = true;
        result.warnings.push_back("memory budget of " + std::to_string(config.memory_budget) +
                                  " bytes is below the estimated " + std::to_string(need(config.parallel_windows, config.context_batch)) +
                                  "; running windows serially with context batch " + std::to_string(batch));
    }

    std::optional<ContextCache> local_cache;
    if (cache == nullptr && config.use_cache && !result.degraded) {
        local_cache.emplace(config.memory_budget);
        cache = &*local_cache;
    }
    if (!config.use_cache) cache = nullptr;

    auto load = [&](TimeWindow w) {
        const auto [first, last] = graph.window_range(w.t0, w.t1);
        const std::size_t begin = std::max(first, first_scored);
        if (begin >= last) return ContextCache::Contexts{};
        return evaluate_stream(model, graph, begin, last);
    };

    result.reports.resize(alert.windows.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(parallel);
    auto worker = [&](std::size_t id) {
        try {
            for (std::size_t i = next++; i < alert.windows.size(); i = next++) {
                const TimeWindow w = alert.windows[i];
                std::shared_ptr<const ContextCache::Contexts> contexts;
                if (cache) {
                    contexts = cache->get_or_load(w, [&] { return load(w); });
                } else {
                    contexts = std::make_shared<const ContextCache::Contexts>(load(w));
                }
                result.reports[i] = explain_window(model, graph, w, *contexts, stats, config, batch);
            }
        } catch (...) {
            errors[id] = std::current_exception();
        }
    };
    if (parallel <= 1) {
        worker(0);
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < parallel; ++t) threads.emplace_back(worker, t);
        for (auto& t : threads) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <typename T>
void read(const json& doc, const char* key, T& out) {
    if (doc.contains(key) && !doc.at(key).is_null()) out = doc.at(key).get<T>();
}

} // namespace

RunConfig run_config_from_json(const json& doc) {
    if (!doc.is_object()) throw FormatError("run config must be a JSON object");
    RunConfig rc;
    try {
        if (doc.contains("model")) rc.model = model_config_from_json(doc.at("model"));
        if (doc.contains("detector")) rc.detector = detector_config_from_json(doc.at("detector"));
        if (doc.contains("pipeline")) {
            const json& p = doc.at("pipeline");
            PipelineConfig& c = rc.pipeline;
            if (p.contains("window_minutes")) {
                c.window_length = static_cast<Timestamp>(
                    std::llround(p.at("window_minutes").get<double>() * static_cast<double>(kNanosPerMinute)));
            }
            read(p, "top_k_events", c.top_k_events);
            read(p, "top_m_nodes", c.top_m_nodes);
            read(p, "memory_budget", c.memory_budget);
            read(p, "parallel_windows", c.parallel_windows);
            read(p, "context_batch", c.context_batch);
            read(p, "use_cache", c.use_cache);
            read(p, "seed", c.seed);
        }
        if (doc.contains("graphmask")) {
            const json& g = doc.at("graphmask");
            read(g, "epochs", rc.pipeline.graphmask.epochs);
            read(g, "learning_rate", rc.pipeline.graphmask.learning_rate);
            read(g, "sparsity_weight", rc.pipeline.graphmask.sparsity_weight);
            read(g, "entropy_weight", rc.pipeline.graphmask.entropy_weight);
        }
        if (doc.contains("gnn")) {
            const json& g = doc.at("gnn");
            read(g, "epochs", rc.pipeline.gnn.epochs);
            read(g, "learning_rate", rc.pipeline.gnn.learning_rate);
            read(g, "top_k", rc.pipeline.gnn.top_k);
            read(g, "sparsity_weight", rc.pipeline.gnn.sparsity_weight);
            read(g, "entropy_weight", rc.pipeline.gnn.entropy_weight);
            if (g.contains("fidelity")) {
                const auto f = g.at("fidelity").get<std::string>();
                if (f == "relative_anomaly") {
                    rc.pipeline.gnn.fidelity = FidelityConvention::RelativeAnomaly;
                } else if (f == "true_relation") {
                    rc.pipeline.gnn.fidelity = FidelityConvention::TrueRelation;
                } else {
                    throw FormatError("gnn.fidelity must be relative_anomaly or true_relation, got " + f);
                }
            }
        }
        if (doc.contains("va_tg")) {
            const json& v = doc.at("va_tg");
            read(v, "lambda_kl", rc.pipeline.vatg.lambda_kl);
            read(v, "lambda_sp", rc.pipeline.vatg.lambda_sp);
            read(v, "mc_samples", rc.pipeline.vatg.mc_samples);
            read(v, "epochs", rc.pipeline.vatg.epochs);
            read(v, "learning_rate", rc.pipeline.vatg.learning_rate);
            read(v, "sparsity_top_k", rc.pipeline.vatg.sparsity_top_k);
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("run config: ") + e.what());
    }
    rc.detector.window_length = rc.pipeline.window_length;
    rc.model.validate();
    rc.detector.validate();
    rc.pipeline.validate();
    return rc;
}

json run_config_to_json(const RunConfig& rc) {
    const PipelineConfig& p = rc.pipeline;
    return {{"model", config_to_json(rc.model)},
            {"detector", detector_config_to_json(rc.detector)},
            {"pipeline",
             {{"window_minutes", static_cast<double>(p.window_length) / static_cast<double>(kNanosPerMinute)},
              {"top_k_events", p.top_k_events},
              {"top_m_nodes", p.top_m_nodes},
              {"memory_budget", p.memory_budget},
              {"parallel_windows", p.parallel_windows},
              {"context_batch", p.context_batch},
              {"use_cache", p.use_cache},
              {"seed", p.seed}}},
            {"graphmask",
             {{"epochs", p.graphmask.epochs},
              {"learning_rate", p.graphmask.learning_rate},
              {"sparsity_weight", p.graphmask.sparsity_weight},
              {"entropy_weight", p.graphmask.entropy_weight}}},
            {"gnn",
             {{"epochs", p.gnn.epochs},
              {"learning_rate", p.gnn.learning_rate},
              {"top_k", p.gnn.top_k},
              {"sparsity_weight", p.gnn.sparsity_weight},
              {"entropy_weight", p.gnn.entropy_weight},
              {"fidelity", p.gnn.fidelity == FidelityConvention::RelativeAnomaly ? "relative_anomaly" : "true_relation"}}},
            {"va_tg",
             {{"lambda_kl", p.vatg.lambda_kl},
              {"lambda_sp", p.vatg.lambda_sp},
              {"mc_samples", p.vatg.mc_samples},
              {"epochs", p.vatg.epochs},
              {"learning_rate", p.vatg.learning_rate},
              {"sparsity_top_k", p.vatg.sparsity_top_k}}}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("config file not found: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(doc);
}

} // namespace provlens
