#include "drml/episodic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace drml {

namespace {

// Decorrelates the validation stream from the training stream.
std::uint64_t validation_seed(std::uint64_t base_seed, std::size_t checkpoint_idx) {
    return base_seed ^ (0x9e3779b97f4a7c15ULL * (checkpoint_idx + 1));
}

// Held-out splits can hold fewer classes than the training protocol asks
// for (the default 12/4/4 split with a 5-way protocol); clamp the episode
// width to what the split offers.
std::size_t clamp_n_way(const Dataset& dataset, Split split, std::size_t n_way) {
    const std::size_t available = dataset.classes_of(split).size();
    if (available < 2)
        throw std::invalid_argument("episode sampling: split has fewer than 2 classes");
    return std::min(n_way, available);
}

CheckpointRecord make_record(const Episode& episode,
                             const std::vector<Vec>& s_origin,
                             const std::vector<Vec>& q_origin,
                             const std::vector<Vec>& p_origin,
                             const std::vector<Vec>& s_new,
                             const std::vector<Vec>& q_new,
                             const std::vector<Vec>& p_new) {
    CheckpointRecord rec;
    rec.n_support = s_origin.size();
    rec.classes = episode.classes;
    Mat x_origin, x_new;
    for (std::size_t i = 0; i < s_origin.size(); ++i) {
        x_origin.rows.push_back(s_origin[i]);
        x_new.rows.push_back(s_new[i]);
        rec.row_class.push_back(episode.support[i].class_id);
    }
    for (std::size_t j = 0; j < q_origin.size(); ++j) {
        x_origin.rows.push_back(q_origin[j]);
        x_new.rows.push_back(q_new[j]);
        rec.row_class.push_back(episode.query[j].class_id);
    }
    // Center each matrix and shift prototypes by the same mean so
    // point-to-prototype distances are unchanged.
    const std::size_t d = x_origin.n_cols();
    Vec mean_o(d, 0.0), mean_n(d, 0.0);
    for (const Vec& r : x_origin.rows)
        for (std::size_t k = 0; k < d; ++k) mean_o[k] += r[k];
    for (const Vec& r : x_new.rows)
        for (std::size_t k = 0; k < d; ++k) mean_n[k] += r[k];
    const double inv = 1.0 / static_cast<double>(x_origin.n_rows());
    for (std::size_t k = 0; k < d; ++k) {
        mean_o[k] *= inv;
        mean_n[k] *= inv;
    }
    rec.x_origin = x_origin;
    rec.x_new = x_new;
    for (Vec& r : rec.x_origin.rows)
        for (std::size_t k = 0; k < d; ++k) r[k] -= mean_o[k];
    for (Vec& r : rec.x_new.rows)
        for (std::size_t k = 0; k < d; ++k) r[k] -= mean_n[k];
    rec.prototypes_origin = p_origin;
    rec.prototypes_new = p_new;
    for (Vec& p : rec.prototypes_origin)
        for (std::size_t k = 0; k < d; ++k) p[k] -= mean_o[k];
    for (Vec& p : rec.prototypes_new)
        for (std::size_t k = 0; k < d; ++k) p[k] -= mean_n[k];
    rec.mean_shift.resize(d);
    for (std::size_t k = 0; k < d; ++k) rec.mean_shift[k] = mean_n[k] - mean_o[k];
    return rec;
}

}  // namespace

std::vector<Vec> compute_prototypes(const std::vector<Vec>& support_embeddings,
                                    const std::vector<int>& labels,
                                    const std::vector<int>& classes) {
    if (support_embeddings.size() != labels.size())
        throw std::invalid_argument("compute_prototypes: label count mismatch");
    std::vector<Vec> prototypes;
    for (int c : classes) {
        Vec p;
        std::size_t count = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != c) continue;
            if (p.empty()) p.assign(support_embeddings[i].size(), 0.0);
            for (std::size_t k = 0; k < p.size(); ++k) p[k] += support_embeddings[i][k];
            ++count;
        }
        if (count == 0)
            throw std::invalid_argument("compute_prototypes: class without support");
        for (double& v : p) v /= static_cast<double>(count);
        prototypes.push_back(std::move(p));
    }
    return prototypes;
}

EmbeddedSupports embed_supports(const MlpParams& params, const Episode& episode) {
    EmbeddedSupports out;
    out.classes = episode.classes;
    for (const LabeledPoint& p : episode.support) {
        out.embeddings.push_back(forward(params, p.features));
        out.labels.push_back(p.class_id);
    }
    out.prototypes = compute_prototypes(out.embeddings, out.labels, out.classes);
    return out;
}

std::vector<double> class_distances(const Vec& query_embedding,
                                    const EmbeddedSupports& supports,
                                    DistanceMode mode) {
    std::vector<double> dist;
    dist.reserve(supports.classes.size());
    for (std::size_t c = 0; c < supports.classes.size(); ++c) {
        if (mode == DistanceMode::Prototype) {
            dist.push_back(euclidean_distance(query_embedding, supports.prototypes[c]));
        } else {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < supports.embeddings.size(); ++i)
                if (supports.labels[i] == supports.classes[c])
                    best = std::min(best,
                                    euclidean_distance(query_embedding,
                                                       supports.embeddings[i]));
            if (!std::isfinite(best))
                throw std::invalid_argument("class_distances: class without support");
            dist.push_back(best);
        }
    }
    return dist;
}

EpisodeEval episode_loss(const Episode& episode, const MlpParams& params,
                         const Head& head, DistanceMode mode) {
    if (episode.query.empty() || episode.classes.size() < 2)
        throw std::invalid_argument("episode_loss: invalid episode");
    if (head.kind != HeadKind::SoftmaxSq && head.kind != HeadKind::DR)
        throw std::invalid_argument("episode_loss: head must be softmax or dr");
    const EmbeddedSupports supports = embed_supports(params, episode);
    EpisodeEval eval;
    std::size_t correct = 0;
    for (const LabeledPoint& q : episode.query) {
        const Vec emb = forward(params, q.features);
        const std::vector<double> dist = class_distances(emb, supports, mode);
        ConfidenceVector conf = head.kind == HeadKind::SoftmaxSq
                                    ? softmax_confidences(dist)
                                    : dr_confidences(dist, head.rho());
        conf.class_order = episode.classes;
        eval.loss += cross_entropy(conf, q.class_id);
        // Stable argmax: ties go to the lowest class index.
        std::size_t best = 0;
        for (std::size_t c = 1; c < conf.probs.size(); ++c)
            if (conf.probs[c] > conf.probs[best]) best = c;
        if (episode.classes[best] == q.class_id) ++correct;
        eval.confidences.push_back(std::move(conf));
    }
    eval.loss /= static_cast<double>(episode.query.size());
    eval.accuracy =
        static_cast<double>(correct) / static_cast<double>(episode.query.size());
    return eval;
}

TrainLog train(const Dataset& dataset, const TrainConfig& config,
               MlpParams* final_params, MlpParams* best_params) {
    if (config.episodes == 0 || config.checkpoint_every == 0)
        throw std::invalid_argument("train: invalid episode counts");
    if (dataset.points.empty())
        throw std::invalid_argument("train: empty dataset");
    const std::size_t input_dim = dataset.points.front().features.size();
    const bool with_rho = is_dr_kind(config.head.kind);
    MlpParams params = init_params({input_dim, 64, 32}, config.seed, with_rho);
    params.log_rho = config.head.log_rho;
    AdamState state = init_adam_state(params);
    std::mt19937_64 rng(config.seed);

    TrainLog log;
    double best_val = -1.0;
    for (std::size_t ep = 1; ep <= config.episodes; ++ep) {
        Episode episode = sample_episode(dataset, Split::Train, config.n_way,
                                         config.k_shot, config.n_query, rng);
        Head head = config.head;
        head.log_rho = params.log_rho;
        const bool checkpoint = ep % config.checkpoint_every == 0;

        EpisodeEval pre_eval;
        EmbeddedSupports pre_supports;
        std::vector<Vec> pre_queries;
        if (checkpoint) {
            pre_eval = episode_loss(episode, params, head, config.mode);
            pre_supports = embed_supports(params, episode);
            for (const LabeledPoint& q : episode.query)
                pre_queries.push_back(forward(params, q.features));
        }

        const MlpGrads grads = loss_gradients(params, episode, head, config.mode);
        adam_step(params, grads, state, config.lr);

        if (checkpoint) {
            const EmbeddedSupports post_supports = embed_supports(params, episode);
            std::vector<Vec> post_queries;
            for (const LabeledPoint& q : episode.query)
                post_queries.push_back(forward(params, q.features));

            Head val_head = config.head;
            val_head.log_rho = params.log_rho;
            std::mt19937_64 vrng(
                validation_seed(config.seed, log.checkpoints.size()));
            const std::size_t val_n_way =
                clamp_n_way(dataset, Split::Val, config.n_way);
            double val_acc = 0.0;
            for (std::size_t v = 0; v < config.val_episodes; ++v) {
                Episode vep = sample_episode(dataset, Split::Val, val_n_way,
                                             config.k_shot, config.n_query, vrng);
                val_acc += episode_loss(vep, params, val_head, config.mode).accuracy;
            }
            val_acc /= static_cast<double>(config.val_episodes);

            CheckpointRow row;
            row.episode = ep;
            row.train_loss = pre_eval.loss;
            row.train_acc = pre_eval.accuracy;
            row.val_acc = val_acc;
            row.rho = std::exp(params.log_rho);
            row.record = make_record(episode, pre_supports.embeddings, pre_queries,
                                     pre_supports.prototypes, post_supports.embeddings,
                                     post_queries, post_supports.prototypes);
            log.checkpoints.push_back(std::move(row));

            if (best_params && val_acc > best_val) {
                best_val = val_acc;
                *best_params = params;
            }
        }
    }
    if (final_params) *final_params = params;
    return log;
}

EvalResult evaluate(const MlpParams& params, const Dataset& dataset, Split split,
                    const EvalConfig& config) {
    if (config.n_episodes == 0)
        throw std::invalid_argument("evaluate: need at least one episode");
    Head head = config.head;
    head.log_rho = params.log_rho;
    std::mt19937_64 rng(config.seed);
    const std::size_t n_way = clamp_n_way(dataset, split, config.n_way);
    std::vector<double> accs;
    accs.reserve(config.n_episodes);
    for (std::size_t e = 0; e < config.n_episodes; ++e) {
        Episode ep = sample_episode(dataset, split, n_way, config.k_shot,
                                    config.n_query, rng);
        accs.push_back(episode_loss(ep, params, head, config.mode).accuracy);
    }
    EvalResult res;
    for (double a : accs) res.mean_accuracy += a;
    res.mean_accuracy /= static_cast<double>(accs.size());
    if (accs.size() > 1) {
        double ss = 0.0;
        for (double a : accs) {
            const double d = a - res.mean_accuracy;
            ss += d * d;
        }
        const double sample_std = std::sqrt(ss / static_cast<double>(accs.size() - 1));
        res.ci_half_width =
            1.96 * sample_std / std::sqrt(static_cast<double>(accs.size()));
    }
    return res;
}

std::string train_log_csv(const TrainLog& log) {
    std::ostringstream out;
    out.precision(17);
    out << "episode,train_loss,train_acc,val_acc,rho\n";
    for (const CheckpointRow& row : log.checkpoints)
        out << row.episode << ',' << row.train_loss << ',' << row.train_acc << ','
            << row.val_acc << ',' << row.rho << '\n';
    return out.str();
}

namespace {

constexpr std::uint64_t kSidecarMagic = 0x44524d4c434b5031ULL;  // "DRMLCKP1"

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("train log sidecar: truncated file");
    return v;
}
double read_f64(std::ifstream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error("train log sidecar: truncated file");
    return v;
}

void write_mat(std::ofstream& out, const Mat& m) {
    write_u64(out, m.n_rows());
    write_u64(out, m.n_cols());
    for (const Vec& r : m.rows)
        for (double v : r) write_f64(out, v);
}

Mat read_mat(std::ifstream& in) {
    const std::uint64_t rows = read_u64(in);
    const std::uint64_t cols = read_u64(in);
    Mat m;
    m.rows.assign(rows, Vec(cols));
    for (Vec& r : m.rows)
        for (double& v : r) v = read_f64(in);
    return m;
}

}  // namespace

void save_train_log(const TrainLog& log, const std::string& csv_path,
                    const std::string& sidecar_path) {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("save_train_log: cannot open " + csv_path);
    csv << train_log_csv(log);
    csv.close();

    std::ofstream out(sidecar_path, std::ios::binary);
    if (!out) throw std::runtime_error("save_train_log: cannot open " + sidecar_path);
    write_u64(out, kSidecarMagic);
    write_u64(out, log.checkpoints.size());
    for (const CheckpointRow& row : log.checkpoints) {
        write_u64(out, row.episode);
        write_f64(out, row.train_loss);
        write_f64(out, row.train_acc);
        write_f64(out, row.val_acc);
        write_f64(out, row.rho);
        const CheckpointRecord& rec = row.record;
        write_u64(out, rec.n_support);
        write_u64(out, rec.row_class.size());
        for (int c : rec.row_class) write_u64(out, static_cast<std::uint64_t>(c));
        write_u64(out, rec.classes.size());
        for (int c : rec.classes) write_u64(out, static_cast<std::uint64_t>(c));
        write_mat(out, rec.x_origin);
        write_mat(out, rec.x_new);
        write_u64(out, rec.prototypes_origin.size());
        for (const Vec& p : rec.prototypes_origin) {
            write_u64(out, p.size());
            for (double v : p) write_f64(out, v);
        }
        write_u64(out, rec.prototypes_new.size());
        for (const Vec& p : rec.prototypes_new) {
            write_u64(out, p.size());
            for (double v : p) write_f64(out, v);
        }
        write_u64(out, rec.mean_shift.size());
        for (double v : rec.mean_shift) write_f64(out, v);
    }
}

TrainLog load_train_log(const std::string& csv_path,
                        const std::string& sidecar_path) {
    std::ifstream in(sidecar_path, std::ios::binary);
    if (!in) throw std::runtime_error("load_train_log: cannot open " + sidecar_path);
    if (read_u64(in) != kSidecarMagic)
        throw std::runtime_error("load_train_log: bad sidecar magic");
    TrainLog log;
    const std::uint64_t n = read_u64(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        CheckpointRow row;
        row.episode = read_u64(in);
        row.train_loss = read_f64(in);
        row.train_acc = read_f64(in);
        row.val_acc = read_f64(in);
        row.rho = read_f64(in);
        CheckpointRecord& rec = row.record;
        rec.n_support = read_u64(in);
        rec.row_class.resize(read_u64(in));
        for (int& c : rec.row_class) c = static_cast<int>(read_u64(in));
        rec.classes.resize(read_u64(in));
        for (int& c : rec.classes) c = static_cast<int>(read_u64(in));
        rec.x_origin = read_mat(in);
        rec.x_new = read_mat(in);
        rec.prototypes_origin.resize(read_u64(in));
        for (Vec& p : rec.prototypes_origin) {
            p.resize(read_u64(in));
            for (double& v : p) v = read_f64(in);
        }
        rec.prototypes_new.resize(read_u64(in));
        for (Vec& p : rec.prototypes_new) {
            p.resize(read_u64(in));
            for (double& v : p) v = read_f64(in);
        }
        rec.mean_shift.resize(read_u64(in));
        for (double& v : rec.mean_shift) v = read_f64(in);
        log.checkpoints.push_back(std::move(row));
    }

    // Cross-check the CSV row count against the sidecar.
    std::ifstream csv(csv_path);
    if (!csv) throw std::runtime_error("load_train_log: cannot open " + csv_path);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    if (rows != log.checkpoints.size() + 1)
        throw std::runtime_error("load_train_log: CSV/sidecar checkpoint mismatch");
    return log;
}

}  // namespace drml
