#include "drml/embedding_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include <json.hpp>

namespace drml {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

struct ForwardCache {
    std::vector<Vec> pre;   // pre-activation per layer
    std::vector<Vec> post;  // post-activation per layer (post[0] is the input)
};

Vec forward_cached(const MlpParams& params, const Vec& x, ForwardCache& cache) {
    if (params.layers.empty())
        throw std::invalid_argument("forward: no layers");
    if (x.size() != params.layers.front().in_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    cache.pre.clear();
    cache.post.clear();
    cache.post.push_back(x);
    Vec a = x;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const Layer& layer = params.layers[l];
        Vec z(layer.out_dim(), 0.0);
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            double s = layer.bias[o];
            const Vec& w = layer.weight[o];
            for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * a[i];
            z[o] = s;
        }
        cache.pre.push_back(z);
        if (l + 1 < params.layers.size())
            for (double& v : z) v = std::max(v, 0.0);
        cache.post.push_back(z);
        a = std::move(z);
    }
    return a;
}

// Accumulates parameter gradients given dL/d(embedding) for one cached input.
void backprop_input(const MlpParams& params, const ForwardCache& cache,
                    const Vec& grad_out, MlpGrads& grads) {
    Vec g = grad_out;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Layer& layer = params.layers[l];
        Layer& glayer = grads.layers[l];
        const Vec& a_in = cache.post[l];
        for (std::size_t o = 0; o < layer.out_dim(); ++o) {
            glayer.bias[o] += g[o];
            for (std::size_t i = 0; i < layer.in_dim(); ++i)
                glayer.weight[o][i] += g[o] * a_in[i];
        }
        if (l == 0) break;
        Vec g_prev(layer.in_dim(), 0.0);
        for (std::size_t o = 0; o < layer.out_dim(); ++o)
            for (std::size_t i = 0; i < layer.in_dim(); ++i)
                g_prev[i] += layer.weight[o][i] * g[o];
        // ReLU mask of the previous layer.
        const Vec& z_prev = cache.pre[l - 1];
        for (std::size_t i = 0; i < g_prev.size(); ++i)
            if (z_prev[i] <= 0.0) g_prev[i] = 0.0;
        g = std::move(g_prev);
    }
}

void check_finite(double v, const char* where) {
    if (!std::isfinite(v))
        throw NumericalFailure(std::string("non-finite value in ") + where);
}

}  // namespace

std::vector<std::size_t> MlpParams::layer_dims() const {
    std::vector<std::size_t> dims;
    if (layers.empty()) return dims;
    dims.push_back(layers.front().in_dim());
    for (const Layer& l : layers) dims.push_back(l.out_dim());
    return dims;
}

MlpParams init_params(const std::vector<std::size_t>& layer_dims,
                      std::uint64_t seed, bool with_rho) {
    if (layer_dims.size() < 2)
        throw std::invalid_argument("init_params: need at least two layer dims");
    for (std::size_t d : layer_dims)
        if (d < 1) throw std::invalid_argument("init_params: layer dim must be >= 1");
    std::mt19937_64 rng(seed);
    MlpParams params;
    params.has_rho = with_rho;
    params.log_rho = 2.0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t fan_in = layer_dims[l];
        const std::size_t fan_out = layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Layer layer;
        layer.weight.assign(fan_out, Vec(fan_in));
        layer.bias.assign(fan_out, 0.0);
        for (std::size_t o = 0; o < fan_out; ++o)
            for (std::size_t i = 0; i < fan_in; ++i)
                layer.weight[o][i] = dist(rng);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

Vec forward(const MlpParams& params, const Vec& x) {
    ForwardCache cache;
    return forward_cached(params, x, cache);
}

void zero_grads(MlpGrads& grads, const MlpParams& params) {
    grads.layers.clear();
    for (const Layer& l : params.layers) {
        Layer g;
        g.weight.assign(l.out_dim(), Vec(l.in_dim(), 0.0));
        g.bias.assign(l.out_dim(), 0.0);
        grads.layers.push_back(std::move(g));
    }
    grads.log_rho = 0.0;
}

AdamState init_adam_state(const MlpParams& params) {
    AdamState state;
    zero_grads(state.m, params);
    zero_grads(state.v, params);
    state.step = 0;
    return state;
}

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state,
               double lr) {
    if (grads.layers.size() != params.layers.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(kAdamBeta1, t);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, t);
    auto update = [&](double& p, double g, double& m, double& v) {
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
        v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
        p -= lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
    };
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        Layer& pl = params.layers[l];
        const Layer& gl = grads.layers[l];
        if (gl.out_dim() != pl.out_dim() || gl.in_dim() != pl.in_dim())
            throw std::invalid_argument("adam_step: layer shape mismatch");
        for (std::size_t o = 0; o < pl.out_dim(); ++o) {
            update(pl.bias[o], gl.bias[o], state.m.layers[l].bias[o],
                   state.v.layers[l].bias[o]);
            for (std::size_t i = 0; i < pl.in_dim(); ++i)
                update(pl.weight[o][i], gl.weight[o][i],
                       state.m.layers[l].weight[o][i], state.v.layers[l].weight[o][i]);
        }
    }
    if (params.has_rho)
        update(params.log_rho, grads.log_rho, state.m.log_rho, state.v.log_rho);
}

MlpGrads loss_gradients(const MlpParams& params, const Episode& episode,
                        const Head& head, DistanceMode mode) {
    const std::size_t n_support = episode.support.size();
    const std::size_t n_query = episode.query.size();
    const std::size_t n_classes = episode.classes.size();
    if (n_query == 0 || n_classes < 2)
        throw std::invalid_argument("loss_gradients: invalid episode");
    if (head.kind != HeadKind::SoftmaxSq && head.kind != HeadKind::DR)
        throw std::invalid_argument("loss_gradients: head must be softmax or dr");

    // Forward passes with caches.
    std::vector<ForwardCache> s_cache(n_support), q_cache(n_query);
    std::vector<Vec> s_emb(n_support), q_emb(n_query);
    for (std::size_t i = 0; i < n_support; ++i)
        s_emb[i] = forward_cached(params, episode.support[i].features, s_cache[i]);
    for (std::size_t j = 0; j < n_query; ++j)
        q_emb[j] = forward_cached(params, episode.query[j].features, q_cache[j]);

    std::map<int, std::size_t> class_index;
    for (std::size_t c = 0; c < n_classes; ++c) class_index[episode.classes[c]] = c;
    std::vector<std::vector<std::size_t>> class_supports(n_classes);
    for (std::size_t i = 0; i < n_support; ++i)
        class_supports[class_index.at(episode.support[i].class_id)].push_back(i);
    for (const auto& members : class_supports)
        if (members.empty())
            throw std::invalid_argument("loss_gradients: class without support");

    const std::size_t emb_dim = s_emb[0].size();
    std::vector<Vec> prototypes(n_classes, Vec(emb_dim, 0.0));
    if (mode == DistanceMode::Prototype) {
        for (std::size_t c = 0; c < n_classes; ++c) {
            for (std::size_t i : class_supports[c])
                for (std::size_t k = 0; k < emb_dim; ++k)
                    prototypes[c][k] += s_emb[i][k];
            for (std::size_t k = 0; k < emb_dim; ++k)
                prototypes[c][k] /= static_cast<double>(class_supports[c].size());
        }
    }

    // Distances and, in NN mode, the realized nearest support per (j, c).
    std::vector<std::vector<double>> dist(n_query, std::vector<double>(n_classes));
    std::vector<std::vector<std::size_t>> nn_index(n_query,
                                                   std::vector<std::size_t>(n_classes));
    for (std::size_t j = 0; j < n_query; ++j) {
        for (std::size_t c = 0; c < n_classes; ++c) {
            if (mode == DistanceMode::Prototype) {
                dist[j][c] = euclidean_distance(q_emb[j], prototypes[c]);
            } else {
                double best = std::numeric_limits<double>::infinity();
                std::size_t best_i = class_supports[c][0];
                for (std::size_t i : class_supports[c]) {
                    const double d = euclidean_distance(q_emb[j], s_emb[i]);
                    if (d < best) {
                        best = d;
                        best_i = i;
                    }
                }
                dist[j][c] = best;
                nn_index[j][c] = best_i;
            }
            check_finite(dist[j][c], "class distances");
        }
    }

    const double rho = head.rho();
    MlpGrads grads;
    zero_grads(grads, params);
    std::vector<Vec> g_emb_q(n_query, Vec(emb_dim, 0.0));
    std::vector<Vec> g_emb_s(n_support, Vec(emb_dim, 0.0));
    std::vector<Vec> g_proto(n_classes, Vec(emb_dim, 0.0));

    for (std::size_t j = 0; j < n_query; ++j) {
        const std::size_t true_c = class_index.at(episode.query[j].class_id);
        // Logits per head, max-subtracted softmax.
        std::vector<double> logits(n_classes);
        for (std::size_t c = 0; c < n_classes; ++c) {
            logits[c] = head.kind == HeadKind::SoftmaxSq
                            ? -dist[j][c] * dist[j][c]
                            : -rho * std::log(dist[j][c]);
            check_finite(logits[c], "logits");
        }
        const double m = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        std::vector<double> p(n_classes);
        for (std::size_t c = 0; c < n_classes; ++c) {
            p[c] = std::exp(logits[c] - m);
            z += p[c];
        }
        for (std::size_t c = 0; c < n_classes; ++c) p[c] /= z;

        for (std::size_t c = 0; c < n_classes; ++c) {
            const double g_logit =
                (p[c] - (c == true_c ? 1.0 : 0.0)) / static_cast<double>(n_query);
            double g_d;
            if (head.kind == HeadKind::SoftmaxSq) {
                g_d = g_logit * (-2.0 * dist[j][c]);
            } else {
                g_d = g_logit * (-rho / dist[j][c]);
                grads.log_rho += g_logit * (-std::log(dist[j][c])) * rho;
            }
            // d = sqrt(||q - r||^2 + eps)  =>  dd/dq = (q - r)/d.
            const Vec& ref = mode == DistanceMode::Prototype
                                 ? prototypes[c]
                                 : s_emb[nn_index[j][c]];
            for (std::size_t k = 0; k < emb_dim; ++k) {
                const double gk = g_d * (q_emb[j][k] - ref[k]) / dist[j][c];
                g_emb_q[j][k] += gk;
                if (mode == DistanceMode::Prototype)
                    g_proto[c][k] -= gk;
                else
                    g_emb_s[nn_index[j][c]][k] -= gk;
            }
        }
    }

    if (mode == DistanceMode::Prototype) {
        for (std::size_t c = 0; c < n_classes; ++c) {
            const double inv_k = 1.0 / static_cast<double>(class_supports[c].size());
            for (std::size_t i : class_supports[c])
                for (std::size_t k = 0; k < emb_dim; ++k)
                    g_emb_s[i][k] += g_proto[c][k] * inv_k;
        }
    }

    for (std::size_t j = 0; j < n_query; ++j)
        backprop_input(params, q_cache[j], g_emb_q[j], grads);
    for (std::size_t i = 0; i < n_support; ++i)
        backprop_input(params, s_cache[i], g_emb_s[i], grads);

    for (const Layer& gl : grads.layers) {
        for (const Vec& row : gl.weight)
            for (double v : row) check_finite(v, "weight gradients");
        for (double v : gl.bias) check_finite(v, "bias gradients");
    }
    check_finite(grads.log_rho, "log_rho gradient");
    return grads;
}

void save_params(const MlpParams& params, HeadKind head_kind,
                 const std::string& bin_path, const std::string& json_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("save_params: cannot open " + bin_path);
    auto write_d = [&](double v) {
        bin.write(reinterpret_cast<const char*>(&v), sizeof(double));
    };
    for (const Layer& l : params.layers) {
        for (const Vec& row : l.weight)
            for (double v : row) write_d(v);
        for (double v : l.bias) write_d(v);
    }
    if (params.has_rho) write_d(params.log_rho);
    bin.close();

    nlohmann::json meta;
    meta["layer_dims"] = params.layer_dims();
    meta["head_kind"] = head_kind_to_string(head_kind);
    meta["has_rho"] = params.has_rho;
    meta["log_rho"] = params.log_rho;
    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("save_params: cannot open " + json_path);
    js << meta.dump(2) << "\n";
}

MlpParams load_params(const std::string& bin_path, const std::string& json_path,
                      HeadKind* head_kind_out) {
    std::ifstream js(json_path);
    if (!js) throw std::runtime_error("load_params: cannot open " + json_path);
    nlohmann::json meta = nlohmann::json::parse(js);
    const std::vector<std::size_t> dims = meta.at("layer_dims");
    const bool has_rho = meta.at("has_rho");
    if (head_kind_out)
        *head_kind_out = head_kind_from_string(meta.at("head_kind"));

    MlpParams params;
    params.has_rho = has_rho;
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("load_params: cannot open " + bin_path);
    auto read_d = [&]() {
        double v;
        bin.read(reinterpret_cast<char*>(&v), sizeof(double));
        if (!bin) throw std::runtime_error("load_params: truncated file");
        return v;
    };
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.weight.assign(dims[l + 1], Vec(dims[l]));
        layer.bias.assign(dims[l + 1], 0.0);
        for (Vec& row : layer.weight)
            for (double& v : row) v = read_d();
        for (double& v : layer.bias) v = read_d();
        params.layers.push_back(std::move(layer));
    }
    params.log_rho = has_rho ? read_d() : 2.0;
    return params;
}

}  // namespace drml
