#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drml/datasets.hpp"
#include "drml/embedding_net.hpp"
#include "drml/episode.hpp"
#include "drml/formulations.hpp"

namespace drml {

// Support embeddings of one episode with per-class prototypes.
struct EmbeddedSupports {
    std::vector<Vec> embeddings;
    std::vector<int> labels;
    std::vector<int> classes;      // episode class order
    std::vector<Vec> prototypes;   // one per class, in class order
};

EmbeddedSupports embed_supports(const MlpParams& params, const Episode& episode);

// Per-class prototypes (arithmetic means), in the given class order.
std::vector<Vec> compute_prototypes(const std::vector<Vec>& support_embeddings,
                                    const std::vector<int>& labels,
                                    const std::vector<int>& classes);

// One distance per episode class: to the prototype, or to the nearest
// support of that class.
std::vector<double> class_distances(const Vec& query_embedding,
                                    const EmbeddedSupports& supports,
                                    DistanceMode mode);

struct EpisodeEval {
    double loss = 0.0;
    double accuracy = 0.0;
    std::vector<ConfidenceVector> confidences;  // one per query
};

EpisodeEval episode_loss(const Episode& episode, const MlpParams& params,
                         const Head& head, DistanceMode mode);

// Pre/post-update embedding snapshot of one training episode. Matrices
// are mean-centered; prototypes are shifted by the same means so all
// distances match the raw embedding space.
struct CheckpointRecord {
    Mat x_origin;
    Mat x_new;
    std::size_t n_support = 0;     // rows [0, n_support) are supports
    std::vector<int> row_class;    // class id per row
    std::vector<int> classes;      // episode class order
    std::vector<Vec> prototypes_origin;
    std::vector<Vec> prototypes_new;
    Vec mean_shift;  // post-update centering mean minus pre-update one
};

struct CheckpointRow {
    std::size_t episode = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double rho = 0.0;
    CheckpointRecord record;
};

struct TrainLog {
    std::vector<CheckpointRow> checkpoints;
};

struct TrainConfig {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t n_query = 16;
    std::size_t episodes = 2000;
    double lr = 1e-3;
    Head head;
    DistanceMode mode = DistanceMode::Prototype;
    std::uint64_t seed = 0;
    std::size_t val_episodes = 50;
    std::size_t checkpoint_every = 100;
};

// Episodic training with a checkpoint every `checkpoint_every` episodes.
// Deterministic given the seed. Optionally returns the best-by-validation
// parameters (earliest checkpoint on ties). Validation episodes clamp
// n_way to the validation split's class count.
TrainLog train(const Dataset& dataset, const TrainConfig& config,
               MlpParams* final_params = nullptr,
               MlpParams* best_params = nullptr);

struct EvalConfig {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t n_query = 16;
    std::size_t n_episodes = 600;
    Head head;
    DistanceMode mode = DistanceMode::Prototype;
    std::uint64_t seed = 0;
};

struct EvalResult {
    double mean_accuracy = 0.0;
    double ci_half_width = 0.0;  // 1.96 * sample std / sqrt(n)
};

// n_way is clamped to the class count of the chosen split.
EvalResult evaluate(const MlpParams& params, const Dataset& dataset, Split split,
                    const EvalConfig& config);

// CSV of one row per checkpoint plus a binary sidecar with the embedding
// snapshots. The pair round-trips exactly.
void save_train_log(const TrainLog& log, const std::string& csv_path,
                    const std::string& sidecar_path);
TrainLog load_train_log(const std::string& csv_path,
                        const std::string& sidecar_path);
std::string train_log_csv(const TrainLog& log);

}  // namespace drml
