#include "provlens/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "dense.hpp"
#include "provlens/error.hpp"

namespace provlens {

namespace {

using json = nlohmann::json;
constexpr std::size_t kR = kNumRelations;
constexpr std::size_t kK = kNumNodeKinds;
constexpr std::size_t kRoles = 4;

/// Offsets of each trainable block inside the flat parameter vector.
struct Layout {
    std::size_t m, t, e, x, db, d, q;
    std::size_t wn, bn, we, be, wo, bo, total;
    // updater blocks: src gate, src candidate, dst gate, dst candidate
    std::size_t ug[2], ubg[2], uc[2], ubc[2], utotal;

    explicit Layout(const ModelConfig& c)
        : m(c.memory_dim), t(c.time_dim), e(c.embed_dim) {
        x = kR + t + kRoles;
        db = 2 * m + 2 * kK + 2 * t + 2;
        d = db + e;
        q = 2 * m + kR + t;
        wn = 0;
        bn = wn + e * x;
        we = bn + e;
        be = we + e * d;
        wo = be + e;
        bo = wo + kR * e;
        total = bo + kR;
        std::size_t off = 0;
        for (int role = 0; role < 2; ++role) {
            ug[role] = off;
            ubg[role] = ug[role] + m * q;
            uc[role] = ubg[role] + m;
            ubc[role] = uc[role] + m * q;
            off = ubc[role] + m;
        }
        utotal = off;
    }
};

/// Sinusoidal features of log(1 + dt seconds).
void time_encoding(double dt_seconds, std::span<double> out) {
    const double u = std::log1p(std::max(0.0, dt_seconds));
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double omega = std::ldexp(2.0, -static_cast<int>(i / 2));
        out[i] = (i % 2 == 0) ? std::sin(omega * u) : std::cos(omega * u);
    }
}

double seconds_between(Timestamp later, Timestamp earlier) {
    return static_cast<double>(later - earlier) / static_cast<double>(kNanosPerSecond);
}

void check_relation(Relation rel) {
    if (index_of(rel) >= kR) throw ArgumentError("relation outside the alphabet");
}

void check_states(const EventContext& ctx, std::size_t memory_dim) {
    if (ctx.node_states.size() != 2 || ctx.node_states[0].memory.size() != memory_dim ||
        ctx.node_states[1].memory.size() != memory_dim) {
        throw ArgumentError("context for event " + std::to_string(ctx.target_index) +
                            " has no memory snapshot; evaluate it with the model first");
    }
}

/// Mask-independent encoder input: endpoint memories, kinds, time encodings
/// and freshness flags.
std::vector<double> base_input(const Layout& L, const EventContext& ctx) {
    std::vector<double> in(L.db, 0.0);
    std::size_t off = 0;
    for (int side = 0; side < 2; ++side) {
        const auto& mem = ctx.node_states[side].memory;
        std::copy(mem.begin(), mem.end(), in.begin() + static_cast<std::ptrdiff_t>(off));
        off += L.m;
    }
    for (int side = 0; side < 2; ++side) {
        in[off + index_of(ctx.node_states[side].kind)] = 1.0;
        off += kK;
    }
    for (int side = 0; side < 2; ++side) {
        const auto& last = ctx.node_states[side].last_update;
        const double dt = last ? seconds_between(ctx.target.timestamp, *last) : 0.0;
        time_encoding(dt, std::span<double>(in).subspan(off, L.t));
        off += L.t;
    }
    for (int side = 0; side < 2; ++side) {
        in[off++] = ctx.node_states[side].last_update ? 0.0 : 1.0;
    }
    return in;
}

/// Features of neighborhood edge `e` relative to the target: relation
/// one-hot, time since the edge, and which target endpoint it touches.
void message_input(const Layout& L, const EventContext& ctx, const Event& e, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[index_of(e.relation)] = 1.0;
    time_encoding(seconds_between(ctx.target.timestamp, e.timestamp), out.subspan(kR, L.t));
    const std::size_t r = kR + L.t;
    out[r + 0] = e.src == ctx.target.src ? 1.0 : 0.0;
    out[r + 1] = e.dst == ctx.target.src ? 1.0 : 0.0;
    out[r + 2] = e.src == ctx.target.dst ? 1.0 : 0.0;
    out[r + 3] = e.dst == ctx.target.dst ? 1.0 : 0.0;
}

Logits make_logits(const RelationVector& z) {
    Logits out;
    out.values = z;
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    out.log_norm = mx + std::log(s);
    return out;
}

struct ParamViews {
    dense::ConstMat wn, we, wo;
    std::span<const double> bn, be, bo;
};

ParamViews views(const Layout& L, std::span<const double> p) {
    return {{p.data() + L.wn, L.e, L.x},
            {p.data() + L.we, L.e, L.d},
            {p.data() + L.wo, kR, L.e},
            p.subspan(L.bn, L.e),
            p.subspan(L.be, L.e),
            p.subspan(L.bo, kR)};
}

/// tanh(W_n x + b_n) for every neighborhood edge, row-major.
std::vector<double> edge_messages(const Layout& L, const ParamViews& P, const EventContext& ctx) {
    const std::size_t n = ctx.neighborhood.size();
    std::vector<double> msgs(n * L.e);
    std::vector<double> x(L.x);
    for (std::size_t j = 0; j < n; ++j) {
        message_input(L, ctx, ctx.neighborhood[j], x);
        auto out = std::span<double>(msgs).subspan(j * L.e, L.e);
        dense::affine(P.wn, P.bn, x, out);
        for (double& v : out) v = std::tanh(v);
    }
    return msgs;
}

/// Encoder pre-activation from the base input alone (aggregate = 0).
std::vector<double> encoder_base(const Layout& L, const ParamViews& P, std::span<const double> base) {
    std::vector<double> pre(L.e);
    for (std::size_t r = 0; r < L.e; ++r) {
        const auto row = P.we.row(r);
        double acc = P.be[r];
        for (std::size_t c = 0; c < L.db; ++c) acc += row[c] * base[c];
        pre[r] = acc;
    }
    return pre;
}

/// Aggregate -> hidden -> logits. `a` has embed_dim entries.
RelationVector decode(const Layout& L, const ParamViews& P, std::span<const double> pre_base,
                      std::span<const double> a, std::span<double> h) {
    for (std::size_t r = 0; r < L.e; ++r) {
        const auto row = P.we.row(r);
        double acc = pre_base[r];
        for (std::size_t c = 0; c < L.e; ++c) acc += row[L.db + c] * a[c];
        h[r] = std::tanh(acc);
    }
    RelationVector z{};
    dense::affine(P.wo, P.bo, h, z);
    return z;
}

} // namespace

// ---------------------------------------------------------------------------
// Logits

double Logits::log_complement(Relation rel) const {
    const std::size_t y = index_of(rel);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kR; ++k) {
        if (k != y) mx = std::max(mx, values[k]);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < kR; ++k) {
        if (k != y) s += std::exp(values[k] - mx);
    }
    return mx + std::log(s) - log_norm;
}

RelationVector Logits::probabilities() const {
    RelationVector p{};
    for (std::size_t k = 0; k < kR; ++k) p[k] = std::exp(values[k] - log_norm);
    return p;
}

RelationVector cross_entropy_logit_gradient(const Logits& logits, Relation target) {
    RelationVector g = logits.probabilities();
    g[index_of(target)] -= 1.0;
    return g;
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
    if (memory_dim == 0 || time_dim == 0 || embed_dim == 0) {
        throw ArgumentError("model dimensions must be positive");
    }
    if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
    if (epochs <= 0) throw ArgumentError("epochs must be positive");
    if (batch_size == 0) throw ArgumentError("batch_size must be positive");
    if (weight_decay < 0.0) throw ArgumentError("weight_decay must be non-negative");
    if (context.hops < 1 || context.horizon < 1) throw ArgumentError("context hops/horizon must be >= 1");
}

// ---------------------------------------------------------------------------
// TgnModel

TgnModel::TgnModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const Layout L(config_);
    params_.assign(L.total, 0.0);
    updater_.assign(L.utotal, 0.0);

    std::mt19937_64 rng(config_.seed);
    auto fill = [&](std::span<double> block, double limit) {
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& v : block) v = dist(rng);
    };
    std::span<double> p(params_);
    fill(p.subspan(L.wn, L.e * L.x), std::sqrt(6.0 / static_cast<double>(L.x + L.e)));
    fill(p.subspan(L.we, L.e * L.d), std::sqrt(6.0 / static_cast<double>(L.d + L.e)));
    fill(p.subspan(L.wo, kR * L.e), std::sqrt(6.0 / static_cast<double>(L.e + kR)));

    std::span<double> u(updater_);
    const double lim = 1.5 / std::sqrt(static_cast<double>(L.q));
    for (int role = 0; role < 2; ++role) {
        fill(u.subspan(L.ug[role], L.m * L.q), lim);
        fill(u.subspan(L.uc[role], L.m * L.q), lim);
        std::fill_n(u.begin() + static_cast<std::ptrdiff_t>(L.ubg[role]), L.m, -0.5);
    }
}

std::size_t TgnModel::message_input_dim() const { return Layout(config_).x; }
std::size_t TgnModel::base_input_dim() const { return Layout(config_).db; }
std::size_t TgnModel::encoder_input_dim() const { return Layout(config_).d; }
std::size_t TgnModel::updater_input_dim() const { return Layout(config_).q; }

void TgnModel::reset_memory() {
    memory_.clear();
    clock_.reset();
}

void TgnModel::restore_memory(MemoryStore memory, std::optional<Timestamp> clock) {
    for (const auto& [id, mem] : memory) {
        if (mem.state.size() != config_.memory_dim) {
            throw ArgumentError("memory of node " + std::to_string(id) + " has wrong dimension");
        }
    }
    memory_ = std::move(memory);
    clock_ = clock;
}

void TgnModel::replay_update(const Event& e) {
    check_relation(e.relation);
    if (clock_ && e.timestamp < *clock_) {
        throw OrderingError("replay of event at " + std::to_string(e.timestamp) +
                            " after memory advanced to " + std::to_string(*clock_));
    }
    const Layout L(config_);
    const std::vector<double> zero(L.m, 0.0);
    auto current = [&](NodeId id) -> std::pair<const std::vector<double>*, std::optional<Timestamp>> {
        auto it = memory_.find(id);
        if (it == memory_.end()) return {&zero, std::nullopt};
        return {&it->second.state, it->second.last_update};
    };

    auto [src_mem, src_last] = current(e.src);
    auto [dst_mem, dst_last] = current(e.dst);
    const std::vector<double> src_old = *src_mem;
    const std::vector<double> dst_old = *dst_mem;

    auto update = [&](int role, const std::vector<double>& self, const std::vector<double>& other,
                      std::optional<Timestamp> last) {
        std::vector<double> q(L.q, 0.0);
        std::copy(self.begin(), self.end(), q.begin());
        std::copy(other.begin(), other.end(), q.begin() + static_cast<std::ptrdiff_t>(L.m));
        q[2 * L.m + index_of(e.relation)] = 1.0;
        time_encoding(last ? seconds_between(e.timestamp, *last) : 0.0,
                      std::span<double>(q).subspan(2 * L.m + kR, L.t));

        std::vector<double> gate(L.m), cand(L.m);
        const std::span<const double> u(updater_);
        dense::affine({u.data() + L.ug[role], L.m, L.q}, u.subspan(L.ubg[role], L.m), q, gate);
        dense::affine({u.data() + L.uc[role], L.m, L.q}, u.subspan(L.ubc[role], L.m), q, cand);
        std::vector<double> out(L.m);
        for (std::size_t i = 0; i < L.m; ++i) {
            const double g = dense::sigmoid(gate[i]);
            out[i] = (1.0 - g) * self[i] + g * std::tanh(cand[i]);
        }
        return out;
    };

    memory_[e.src] = {update(0, src_old, dst_old, src_last), e.timestamp};
    if (e.dst != e.src) memory_[e.dst] = {update(1, dst_old, src_old, dst_last), e.timestamp};
    clock_ = e.timestamp;
}

void TgnModel::capture_state(EventContext& ctx) const {
    if (ctx.node_states.size() != 2) {
        throw ArgumentError("context was not produced by TemporalGraph::extract_context");
    }
    for (auto& st : ctx.node_states) {
        auto it = memory_.find(st.node);
        if (it == memory_.end()) {
            st.memory.assign(config_.memory_dim, 0.0);
            st.last_update.reset();
        } else {
            st.memory = it->second.state;
            st.last_update = it->second.last_update;
        }
    }
}

EventPrediction TgnModel::predict(const EventContext& ctx) const {
    check_relation(ctx.target.relation);
    check_states(ctx, config_.memory_dim);
    const Layout L(config_);
    const ParamViews P = views(L, params_);
    const auto msgs = edge_messages(L, P, ctx);
    const std::size_t n = ctx.neighborhood.size();
    std::vector<double> a(L.e, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < L.e; ++c) a[c] += msgs[j * L.e + c];
    }
    if (n > 0) {
        for (double& v : a) v /= static_cast<double>(n);
    }
    const auto pre = encoder_base(L, P, base_input(L, ctx));
    std::vector<double> h(L.e);
    return {make_logits(decode(L, P, pre, a, h)).probabilities()};
}

AnomalyScore TgnModel::score_event(const EventContext& ctx) const {
    // Through the logits, so tiny probabilities keep their precision.
    MaskedEvaluator eval(*this, ctx);
    return {-eval.forward(eval.ones()).log_prob(ctx.target.relation)};
}

MaskedOutput TgnModel::masked_forward(const EventContext& ctx, std::span<const double> mask) const {
    MaskedEvaluator eval(*this, ctx);
    const Logits lg = eval.forward(mask);
    return {{lg.probabilities()}, {-lg.log_prob(ctx.target.relation)}};
}

// ---------------------------------------------------------------------------
// MaskedEvaluator

MaskedEvaluator::MaskedEvaluator(const TgnModel& model, const EventContext& ctx)
    : model_(&model), num_edges_(ctx.neighborhood.size()), target_(ctx.target.relation) {
    check_relation(ctx.target.relation);
    check_states(ctx, model.config_.memory_dim);
    const Layout L(model.config_);
    const ParamViews P = views(L, model.params_);
    messages_ = edge_messages(L, P, ctx);
    pre_base_ = encoder_base(L, P, base_input(L, ctx));
}

void MaskedEvaluator::check_mask(std::span<const double> mask) const {
    if (mask.size() != num_edges_) {
        throw ArgumentError("mask has " + std::to_string(mask.size()) + " entries for " +
                            std::to_string(num_edges_) + " neighborhood edges");
    }
    for (double m : mask) {
        if (!(m >= 0.0 && m <= 1.0)) throw ArgumentError("mask entry outside [0, 1]");
    }
}

MaskedEvaluator::Hidden MaskedEvaluator::run(std::span<const double> mask) const {
    check_mask(mask);
    const Layout L(model_->config_);
    const ParamViews P = views(L, model_->params_);
    Hidden out;
    out.a.assign(L.e, 0.0);
    for (std::size_t j = 0; j < num_edges_; ++j) {
        for (std::size_t c = 0; c < L.e; ++c) out.a[c] += mask[j] * messages_[j * L.e + c];
    }
    if (num_edges_ > 0) {
        for (double& v : out.a) v /= static_cast<double>(num_edges_);
    }
    out.h.assign(L.e, 0.0);
    out.logits = make_logits(decode(L, P, pre_base_, out.a, out.h));
    return out;
}

Logits MaskedEvaluator::forward(std::span<const double> mask) const { return run(mask).logits; }

std::vector<double> MaskedEvaluator::backward(std::span<const double> mask,
                                              const RelationVector& dlogits) const {
    const Hidden hid = run(mask);
    const Layout L(model_->config_);
    const ParamViews P = views(L, model_->params_);

    std::vector<double> dh(L.e, 0.0);
    dense::accumulate_transpose(P.wo, dlogits, dh);
    std::vector<double> da(L.e, 0.0);
    for (std::size_t r = 0; r < L.e; ++r) {
        const double dpre = dh[r] * (1.0 - hid.h[r] * hid.h[r]);
        const auto row = P.we.row(r);
        for (std::size_t c = 0; c < L.e; ++c) da[c] += row[L.db + c] * dpre;
    }
    std::vector<double> grad(num_edges_, 0.0);
    const double inv_n = num_edges_ > 0 ? 1.0 / static_cast<double>(num_edges_) : 0.0;
    for (std::size_t j = 0; j < num_edges_; ++j) {
        grad[j] = inv_n * dense::dot(std::span<const double>(messages_).subspan(j * L.e, L.e), da);
    }
    return grad;
}

double MaskedEvaluator::cross_entropy(std::span<const double> mask, std::vector<double>* grad) const {
    const Logits lg = forward(mask);
    if (grad) *grad = backward(mask, cross_entropy_logit_gradient(lg, target_));
    return -lg.log_prob(target_);
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Sample {
    std::vector<double> base;
    std::vector<double> edges; // n x message input dim
    std::size_t n = 0;
    std::size_t y = 0;
};

} // namespace

class Trainer {
public:
    Trainer(TgnModel& model) : model_(model), L_(model.config_) {}

    Sample make_sample(const EventContext& ctx) const {
        Sample s;
        s.base = base_input(L_, ctx);
        s.n = ctx.neighborhood.size();
        s.edges.assign(s.n * L_.x, 0.0);
        for (std::size_t j = 0; j < s.n; ++j) {
            message_input(L_, ctx, ctx.neighborhood[j], std::span<double>(s.edges).subspan(j * L_.x, L_.x));
        }
        s.y = index_of(ctx.target.relation);
        return s;
    }

    /// Loss of one sample; accumulates its gradient into `grad` when given.
    double step(const Sample& s, std::vector<double>* grad) const {
        const std::span<const double> p(model_.params_);
        const ParamViews P = views(L_, p);

        std::vector<double> msgs(s.n * L_.e);
        for (std::size_t j = 0; j < s.n; ++j) {
            auto out = std::span<double>(msgs).subspan(j * L_.e, L_.e);
            dense::affine(P.wn, P.bn, std::span<const double>(s.edges).subspan(j * L_.x, L_.x), out);
            for (double& v : out) v = std::tanh(v);
        }
        std::vector<double> in(L_.d, 0.0);
        std::copy(s.base.begin(), s.base.end(), in.begin());
        const double inv_n = s.n > 0 ? 1.0 / static_cast<double>(s.n) : 0.0;
        for (std::size_t j = 0; j < s.n; ++j) {
            for (std::size_t c = 0; c < L_.e; ++c) in[L_.db + c] += msgs[j * L_.e + c] * inv_n;
        }
        std::vector<double> h(L_.e);
        dense::affine(P.we, P.be, in, h);
        for (double& v : h) v = std::tanh(v);
        RelationVector z{};
        dense::affine(P.wo, P.bo, h, z);
        const Logits lg = make_logits(z);
        const double loss = lg.log_norm - z[s.y];
        if (!grad) return loss;

        std::span<double> g(*grad);
        RelationVector dz = lg.probabilities();
        dz[s.y] -= 1.0;
        dense::accumulate_outer({g.data() + L_.wo, kR, L_.e}, dz, h);
        for (std::size_t k = 0; k < kR; ++k) g[L_.bo + k] += dz[k];

        std::vector<double> dpre(L_.e, 0.0);
        dense::accumulate_transpose(P.wo, dz, dpre);
        for (std::size_t r = 0; r < L_.e; ++r) dpre[r] *= 1.0 - h[r] * h[r];
        dense::accumulate_outer({g.data() + L_.we, L_.e, L_.d}, dpre, in);
        for (std::size_t r = 0; r < L_.e; ++r) g[L_.be + r] += dpre[r];

        if (s.n == 0) return loss;
        std::vector<double> din(L_.d, 0.0);
        dense::accumulate_transpose(P.we, dpre, din);
        const std::span<const double> da = std::span<const double>(din).subspan(L_.db, L_.e);
        std::vector<double> dmsg(L_.e);
        for (std::size_t j = 0; j < s.n; ++j) {
            for (std::size_t c = 0; c < L_.e; ++c) {
                const double m = msgs[j * L_.e + c];
                dmsg[c] = da[c] * inv_n * (1.0 - m * m);
            }
            dense::accumulate_outer({g.data() + L_.wn, L_.e, L_.x}, dmsg,
                                    std::span<const double>(s.edges).subspan(j * L_.x, L_.x));
            for (std::size_t c = 0; c < L_.e; ++c) g[L_.bn + c] += dmsg[c];
        }
        return loss;
    }

    TrainReport fit(const std::vector<Sample>& samples) {
        const ModelConfig& cfg = model_.config_;
        std::vector<double> m1(L_.total, 0.0), m2(L_.total, 0.0), grad(L_.total);
        std::vector<std::size_t> order(samples.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        long long t = 0;

        TrainReport report;
        report.num_samples = samples.size();
        for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            double total = 0.0;
            for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
                const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
                std::fill(grad.begin(), grad.end(), 0.0);
                for (std::size_t i = start; i < stop; ++i) total += step(samples[order[i]], &grad);
                const double scale = 1.0 / static_cast<double>(stop - start);
                ++t;
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
                for (std::size_t k = 0; k < L_.total; ++k) {
                    const double gk = grad[k] * scale;
                    m1[k] = beta1 * m1[k] + (1.0 - beta1) * gk;
                    m2[k] = beta2 * m2[k] + (1.0 - beta2) * gk * gk;
                    // Decoupled decay: weights that never see a gradient (an
                    // unseen relation's column) shrink slowly instead of being
                    // driven to zero by the normalized step.
                    double& w = model_.params_[k];
                    w -= cfg.learning_rate * ((m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps) + cfg.weight_decay * w);
                }
            }
            const double mean = total / static_cast<double>(samples.size());
            if (!std::isfinite(mean)) {
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                      " (non-finite loss)");
            }
            report.epoch_losses.push_back(mean);
        }

        double sum = 0.0, sq = 0.0;
        for (const auto& s : samples) {
            const double l = step(s, nullptr);
            sum += l;
            sq += l * l;
        }
        const double n = static_cast<double>(samples.size());
        report.final_mean_loss = sum / n;
        if (!std::isfinite(report.final_mean_loss)) {
            throw DivergenceError("training diverged at epoch " + std::to_string(cfg.epochs) +
                                  " (non-finite final loss)");
        }
        model_.training_loss_ = {sum / n, std::sqrt(std::max(0.0, sq / n - (sum / n) * (sum / n)))};
        return report;
    }

private:
    TgnModel& model_;
    Layout L_;
};

TrainingSplit default_split(const LabeledDataset& ds) {
    const auto events = ds.graph.events();
    if (events.empty()) throw ArgumentError("dataset has no events");
    const Timestamp first = events.front().timestamp;
    const Timestamp pre_end = ds.attack_interval ? ds.attack_interval->first : events.back().timestamp + 1;
    const Timestamp span = std::max<Timestamp>(1, pre_end - first);
    TrainingSplit split;
    split.train_end = first + static_cast<Timestamp>(std::llround(0.8 * static_cast<double>(span)));
    split.validation_end = pre_end;
    return split;
}

TrainedModel train(const LabeledDataset& ds, const ModelConfig& config, std::optional<Timestamp> train_end) {
    if (ds.graph.num_events() == 0) throw ArgumentError("cannot train on an empty dataset");
    const Timestamp cutoff = train_end ? *train_end : default_split(ds).train_end;

    TrainedModel out{TgnModel(config), {}};
    TgnModel& model = out.model;
    Trainer trainer(model);

    std::vector<Sample> samples;
    const auto events = ds.graph.events();
    for (std::size_t i = 0; i < events.size() && events[i].timestamp < cutoff; ++i) {
        EventContext ctx = ds.graph.extract_context(i, config.context);
        model.capture_state(ctx);
        samples.push_back(trainer.make_sample(ctx));
        model.replay_update(events[i]);
    }
    if (samples.empty()) throw ArgumentError("no training events before the training cutoff");

    out.report = trainer.fit(samples);
    model.set_snapshot_time(cutoff);
    return out;
}

std::size_t first_unseen_index(const TgnModel& model, const TemporalGraph& graph) {
    const auto events = graph.events();
    if (!model.snapshot_time()) return 0;
    const Timestamp t = *model.snapshot_time();
    auto it = std::lower_bound(events.begin(), events.end(), t,
                               [](const Event& e, Timestamp ts) { return e.timestamp < ts; });
    return static_cast<std::size_t>(it - events.begin());
}

std::vector<EventContext> evaluate_stream(const TgnModel& model, const TemporalGraph& graph,
                                          std::size_t begin, std::size_t end) {
    const std::size_t start = first_unseen_index(model, graph);
    end = std::min(end, graph.num_events());
    if (begin < start) {
        throw ArgumentError("event " + std::to_string(begin) +
                            " precedes the model's memory snapshot; it cannot be re-evaluated");
    }
    TgnModel replay = model;
    std::vector<EventContext> out;
    if (end > begin) out.reserve(end - begin);
    const auto events = graph.events();
    for (std::size_t i = start; i < end; ++i) {
        if (i >= begin) {
            EventContext ctx = graph.extract_context(i, model.config().context);
            replay.capture_state(ctx);
            ctx.loss = replay.score_event(ctx).loss;
            out.push_back(std::move(ctx));
        }
        replay.replay_update(events[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

json config_to_json(const ModelConfig& c) {
    return {{"memory_dim", c.memory_dim},   {"time_dim", c.time_dim},
            {"embed_dim", c.embed_dim},     {"learning_rate", c.learning_rate},
            {"epochs", c.epochs},           {"batch_size", c.batch_size},
            {"weight_decay", c.weight_decay}, {"seed", c.seed},
            {"hops", c.context.hops},       {"horizon", c.context.horizon}};
}

ModelConfig model_config_from_json(const json& doc) {
    ModelConfig c;
    c.memory_dim = doc.value("memory_dim", c.memory_dim);
    c.time_dim = doc.value("time_dim", c.time_dim);
    c.embed_dim = doc.value("embed_dim", c.embed_dim);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.epochs = doc.value("epochs", c.epochs);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.weight_decay = doc.value("weight_decay", c.weight_decay);
    c.seed = doc.value("seed", c.seed);
    c.context.hops = doc.value("hops", c.context.hops);
    c.context.horizon = doc.value("horizon", c.context.horizon);
    return c;
}

json model_to_json(const TgnModel& model) {
    json memory = json::array();
    for (const auto& [id, mem] : model.memory()) {
        memory.push_back({{"node", id},
                          {"state", mem.state},
                          {"last_update", mem.last_update ? json(*mem.last_update) : json(nullptr)}});
    }
    auto opt = [](std::optional<Timestamp> t) { return t ? json(*t) : json(nullptr); };
    return {{"version", kCheckpointVersion},
            {"config", config_to_json(model.config())},
            {"parameters", std::vector<double>(model.parameters().begin(), model.parameters().end())},
            {"updater", std::vector<double>(model.updater_parameters().begin(), model.updater_parameters().end())},
            {"memory", std::move(memory)},
            {"clock", opt(model.clock())},
            {"snapshot_time", opt(model.snapshot_time())},
            {"training_loss", {{"mean", model.training_loss().mean}, {"std", model.training_loss().std}}}};
}

TgnModel model_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("version")) throw FormatError("checkpoint: missing version");
    if (!doc.at("version").is_number_integer() || doc.at("version").get<int>() != kCheckpointVersion) {
        throw VersionError("checkpoint: unsupported version " + doc.at("version").dump());
    }
    try {
        TgnModel model(model_config_from_json(doc.at("config")));
        auto params = doc.at("parameters").get<std::vector<double>>();
        auto updater = doc.at("updater").get<std::vector<double>>();
        if (params.size() != model.params_.size() || updater.size() != model.updater_.size()) {
            throw FormatError("checkpoint: parameter count does not match config");
        }
        model.params_ = std::move(params);
        model.updater_ = std::move(updater);
        auto opt = [](const json& j) -> std::optional<Timestamp> {
            if (j.is_null()) return std::nullopt;
            return j.get<Timestamp>();
        };
        MemoryStore memory;
        for (const auto& m : doc.at("memory")) {
            memory[m.at("node").get<NodeId>()] = {m.at("state").get<std::vector<double>>(), opt(m.at("last_update"))};
        }
        model.restore_memory(std::move(memory), opt(doc.at("clock")));
        model.snapshot_time_ = opt(doc.at("snapshot_time"));
        model.training_loss_ = {doc.at("training_loss").at("mean").get<double>(),
                                doc.at("training_loss").at("std").get<double>()};
        return model;
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

void save_checkpoint(const TgnModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw NotFoundError("cannot open " + path.string() + " for writing");
    out << model_to_json(model).dump() << '\n';
}

TgnModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("checkpoint not found: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("checkpoint " + path.string() + " is corrupt: " + e.what());
    }
    return model_from_json(doc);
}

} // namespace provlens
