#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "provlens/graph.hpp"
#include "provlens/ingest.hpp"

namespace provlens {

struct ModelConfig {
    std::size_t memory_dim = 32;
    std::size_t time_dim = 8;
    std::size_t embed_dim = 32;
    double learning_rate = 0.005;
    int epochs = 30;
    std::size_t batch_size = 32;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    ContextOptions context{};

    /// Throws ArgumentError.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct NodeMemory {
    std::vector<double> state;
    std::optional<Timestamp> last_update;

    bool operator==(const NodeMemory&) const = default;
};

/// Nodes never touched by replay have zero memory and no last_update.
using MemoryStore = std::map<NodeId, NodeMemory>;

using RelationVector = std::array<double, kNumRelations>;

struct EventPrediction {
    RelationVector probabilities{};
};

struct AnomalyScore {
    double loss = 0.0;
};

struct MaskedOutput {
    EventPrediction prediction;
    AnomalyScore loss;
};

/// Decoder logits for one forward pass plus the log-partition, so callers can
/// form log-probabilities without cancellation.
struct Logits {
    RelationVector values{};
    double log_norm = 0.0;

    double log_prob(Relation rel) const { return values[index_of(rel)] - log_norm; }
    /// log(1 - p(rel)), computed from the remaining logits.
    double log_complement(Relation rel) const;
    RelationVector probabilities() const;
};

struct LossStats {
    double mean = 0.0;
    double std = 0.0;

    bool operator==(const LossStats&) const = default;
};

/// Compact temporal graph network: per-node recurrent memory, a masked
/// neighborhood aggregator, an MLP encoder producing z_t, and a softmax
/// decoder over relation types.
///
/// The memory updater is a fixed, seeded gated recurrent cell; training fits
/// the message, encoder and decoder weights. Scoring reads memory only from a
/// context's `node_states`, so it never mutates the model.
class TgnModel {
public:
    explicit TgnModel(const ModelConfig& config = {});

    const ModelConfig& config() const { return config_; }

    void reset_memory();
    /// Updates both endpoint memories. Throws OrderingError if `e` is older
    /// than the last replayed event.
    void replay_update(const Event& e);
    const MemoryStore& memory() const { return memory_; }
    std::optional<Timestamp> clock() const { return clock_; }
    void restore_memory(MemoryStore memory, std::optional<Timestamp> clock);

    /// Timestamp up to which the stored memory snapshot has been replayed
    /// (the end of the training prefix); unset for an untrained model.
    std::optional<Timestamp> snapshot_time() const { return snapshot_time_; }
    void set_snapshot_time(std::optional<Timestamp> t) { snapshot_time_ = t; }

    /// Copies the target endpoints' current memory into ctx.node_states.
    void capture_state(EventContext& ctx) const;

    /// Throws ArgumentError if `ctx` lacks node states or has a bad relation.
    EventPrediction predict(const EventContext& ctx) const;
    AnomalyScore score_event(const EventContext& ctx) const;

    /// Forward pass with neighborhood edge i's message scaled by mask[i].
    /// Throws ArgumentError on length mismatch or entries outside [0, 1].
    MaskedOutput masked_forward(const EventContext& ctx, std::span<const double> mask) const;

    std::span<const double> parameters() const { return params_; }
    std::span<double> parameters() { return params_; }
    std::span<const double> updater_parameters() const { return updater_; }

    LossStats training_loss() const { return training_loss_; }
    void set_training_loss(LossStats s) { training_loss_ = s; }

    bool operator==(const TgnModel&) const = default;

    // Layer dimensions, derived from the config.
    std::size_t message_input_dim() const;
    std::size_t base_input_dim() const;
    std::size_t encoder_input_dim() const;
    std::size_t updater_input_dim() const;

private:
    friend class MaskedEvaluator;
    friend class Trainer;
    friend TgnModel model_from_json(const nlohmann::json&);

    ModelConfig config_;
    std::vector<double> params_;
    std::vector<double> updater_;
    MemoryStore memory_;
    std::optional<Timestamp> clock_;
    std::optional<Timestamp> snapshot_time_;
    LossStats training_loss_{};
};

/// Mask-differentiable evaluator for one context. Mask-independent work
/// (per-edge messages, the memory part of the encoder) is done once in the
/// constructor; each evaluation is then a few small matrix products.
class MaskedEvaluator {
public:
    MaskedEvaluator(const TgnModel& model, const EventContext& ctx);

    std::size_t num_edges() const { return num_edges_; }
    Relation target() const { return target_; }

    /// Throws ArgumentError on a bad mask.
    Logits forward(std::span<const double> mask) const;
    /// Chain rule from d(objective)/d(logits) to d(objective)/d(mask).
    std::vector<double> backward(std::span<const double> mask, const RelationVector& dlogits) const;

    /// Cross-entropy against the target relation and its mask gradient.
    double cross_entropy(std::span<const double> mask, std::vector<double>* grad = nullptr) const;

    std::vector<double> ones() const { return std::vector<double>(num_edges_, 1.0); }

private:
    struct Hidden {
        std::vector<double> a;
        std::vector<double> h;
        Logits logits;
    };
    Hidden run(std::span<const double> mask) const;
    void check_mask(std::span<const double> mask) const;

    const TgnModel* model_;
    std::size_t num_edges_;
    Relation target_;
    std::vector<double> messages_;  // num_edges x message dim
    std::vector<double> pre_base_;  // encoder pre-activation without the aggregate
};

/// d(CE)/d(logits) = softmax - onehot.
RelationVector cross_entropy_logit_gradient(const Logits& logits, Relation target);

/// Chronological boundaries used for training and threshold calibration.
struct TrainingSplit {
    Timestamp train_end = 0;      ///< training uses events before this
    Timestamp validation_end = 0; ///< benign validation slice is [train_end, validation_end)
};

/// Pre-attack timeline = everything before the first MALICIOUS event (or the
/// whole stream); training gets its first 80%, validation the last 20%.
TrainingSplit default_split(const LabeledDataset& ds);

struct TrainReport {
    std::vector<double> epoch_losses;
    double final_mean_loss = 0.0;
    std::size_t num_samples = 0;
};

struct TrainedModel {
    TgnModel model;
    TrainReport report;
};

/// Fits the model to predict relation types of events before `train_end`
/// (default: default_split(ds).train_end). The returned model holds the
/// memory snapshot at train_end. Throws ArgumentError on an empty training
/// set and DivergenceError on a non-finite loss.
TrainedModel train(const LabeledDataset& ds, const ModelConfig& config,
                   std::optional<Timestamp> train_end = std::nullopt);

/// Replays from the model's memory snapshot and returns evaluated contexts
/// (node states and loss filled) for events [begin, end). Events between the
/// snapshot time and `begin` are replayed without being captured.
std::vector<EventContext> evaluate_stream(const TgnModel& model, const TemporalGraph& graph,
                                          std::size_t begin, std::size_t end);

/// First event index the model's snapshot has not yet seen.
std::size_t first_unseen_index(const TgnModel& model, const TemporalGraph& graph);

inline constexpr int kCheckpointVersion = 1;

nlohmann::json model_to_json(const TgnModel& model);
TgnModel model_from_json(const nlohmann::json& doc);
void save_checkpoint(const TgnModel& model, const std::filesystem::path& path);
/// Throws NotFoundError, VersionError or FormatError.
TgnModel load_checkpoint(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& config);
/// Missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& doc);

} // namespace provlens
