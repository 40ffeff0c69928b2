#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drml/core_math.hpp"
#include "drml/episode.hpp"
#include "drml/formulations.hpp"

namespace drml {

// One fully-connected layer: out = W * in + b, W stored row-major
// as weight[out][in].
struct Layer {
    std::vector<Vec> weight;  // [out_dim][in_dim]
    Vec bias;                 // [out_dim]

    std::size_t in_dim() const { return weight.empty() ? 0 : weight[0].size(); }
    std::size_t out_dim() const { return weight.size(); }
};

// MLP with ReLU between layers and identity at the output, plus the
// trainable ln(rho) of the DR head.
struct MlpParams {
    std::vector<Layer> layers;
    bool has_rho = false;
    double log_rho = 2.0;

    std::vector<std::size_t> layer_dims() const;
};

// Gradient record with the same shape as MlpParams.
struct MlpGrads {
    std::vector<Layer> layers;
    double log_rho = 0.0;
};

struct AdamState {
    MlpGrads m;  // first moments
    MlpGrads v;  // second moments
    std::int64_t step = 0;
};

// Seeded init: weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0,
// log_rho = 2.0 when with_rho.
MlpParams init_params(const std::vector<std::size_t>& layer_dims,
                      std::uint64_t seed, bool with_rho);

Vec forward(const MlpParams& params, const Vec& x);

AdamState init_adam_state(const MlpParams& params);

// Bias-corrected Adam update (beta1=0.9, beta2=0.999, eps=1e-8) applied
// in place to params and state.
void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state,
               double lr);

void zero_grads(MlpGrads& grads, const MlpParams& params);

// Exact reverse-mode gradients of the episode loss with respect to all
// weights, biases, and log_rho. The graph spans forward pass, prototype
// or nearest-neighbor distances, the head, and cross-entropy.
MlpGrads loss_gradients(const MlpParams& params, const Episode& episode,
                        const Head& head, DistanceMode mode);

// Raised when a forward/backward pass produces a non-finite value.
struct NumericalFailure : std::runtime_error {
    explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

// Flat binary file of doubles plus a JSON sidecar (layer dims, head
// kind, log_rho). Exact round-trip.
void save_params(const MlpParams& params, HeadKind head_kind,
                 const std::string& bin_path, const std::string& json_path);
MlpParams load_params(const std::string& bin_path, const std::string& json_path,
                      HeadKind* head_kind_out = nullptr);

}  // namespace drml
