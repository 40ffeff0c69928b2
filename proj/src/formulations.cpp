#include "drml/formulations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace drml {

namespace {

std::vector<int> default_order(std::size_t n) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    return order;
}

// Stable softmax over arbitrary logits.
std::vector<double> softmax_logits(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

void check_distances(const std::vector<double>& distances) {
    if (distances.empty())
        throw std::invalid_argument("confidences: empty distance vector");
    for (double d : distances)
        if (!std::isfinite(d))
            throw std::invalid_argument("confidences: non-finite distance");
}

}  // namespace

double Head::rho() const { return std::exp(log_rho); }

HeadKind head_kind_from_string(const std::string& name) {
    if (name == "softmax") return HeadKind::SoftmaxSq;
    if (name == "dr") return HeadKind::DR;
    if (name == "normface") return HeadKind::CosNormFace;
    if (name == "sphereface") return HeadKind::CosSphereFace;
    if (name == "cosface") return HeadKind::CosCosFace;
    if (name == "arcface") return HeadKind::CosArcFace;
    if (name == "ang_softmax") return HeadKind::AngSoftmax;
    if (name == "ang_dr") return HeadKind::AngDR;
    throw std::invalid_argument("unknown head kind: " + name);
}

std::string head_kind_to_string(HeadKind kind) {
    switch (kind) {
        case HeadKind::SoftmaxSq: return "softmax";
        case HeadKind::DR: return "dr";
        case HeadKind::CosNormFace: return "normface";
        case HeadKind::CosSphereFace: return "sphereface";
        case HeadKind::CosCosFace: return "cosface";
        case HeadKind::CosArcFace: return "arcface";
        case HeadKind::AngSoftmax: return "ang_softmax";
        case HeadKind::AngDR: return "ang_dr";
    }
    throw std::invalid_argument("unknown head kind");
}

bool is_cosine_kind(HeadKind kind) {
    return kind == HeadKind::CosNormFace || kind == HeadKind::CosSphereFace ||
           kind == HeadKind::CosCosFace || kind == HeadKind::CosArcFace;
}

bool is_dr_kind(HeadKind kind) {
    return kind == HeadKind::DR || kind == HeadKind::AngDR;
}

ConfidenceVector softmax_confidences(const std::vector<double>& distances) {
    check_distances(distances);
    std::vector<double> logits(distances.size());
    for (std::size_t i = 0; i < distances.size(); ++i)
        logits[i] = -distances[i] * distances[i];
    return {softmax_logits(logits), default_order(distances.size())};
}

ConfidenceVector dr_confidences(const std::vector<double>& distances, double rho) {
    check_distances(distances);
    std::size_t n_zero = 0;
    for (double d : distances)
        if (d == 0.0) ++n_zero;
    const std::size_t n = distances.size();
    if (n_zero > 0) {
        // Degenerate rule: zero-distance classes take all the mass.
        ConfidenceVector conf{std::vector<double>(n, 0.0), default_order(n)};
        for (std::size_t i = 0; i < n; ++i)
            if (distances[i] == 0.0) conf.probs[i] = 1.0 / static_cast<double>(n_zero);
        return conf;
    }
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) logits[i] = -rho * std::log(distances[i]);
    return {softmax_logits(logits), default_order(n)};
}

double cross_entropy(const ConfidenceVector& conf, int true_class) {
    for (std::size_t i = 0; i < conf.class_order.size(); ++i) {
        if (conf.class_order[i] == true_class) {
            const double p = std::max(conf.probs[i], 1e-30);
            return -std::log(p);
        }
    }
    throw std::invalid_argument("cross_entropy: unknown class");
}

ConfidenceVector cosine_confidences(const Vec& query,
                                    const std::vector<Vec>& class_vectors,
                                    const Head& head, int target) {
    if (!is_cosine_kind(head.kind))
        throw std::invalid_argument("cosine_confidences: head is not a cosine kind");
    if (class_vectors.empty())
        throw std::invalid_argument("cosine_confidences: no class vectors");
    const double s = head.scale_s;
    const double m = head.margin_m;
    std::vector<double> logits(class_vectors.size());
    for (std::size_t c = 0; c < class_vectors.size(); ++c) {
        const double theta = angular_distance(query, class_vectors[c]);
        double logit = s * std::cos(theta);
        if (static_cast<int>(c) == target) {
            switch (head.kind) {
                case HeadKind::CosNormFace: break;
                case HeadKind::CosSphereFace: logit = s * std::cos(2.0 * theta); break;
                case HeadKind::CosCosFace: logit = s * (std::cos(theta) - m); break;
                case HeadKind::CosArcFace: logit = s * std::cos(theta + m); break;
                default: break;
            }
        }
        logits[c] = logit;
    }
    return {softmax_logits(logits), default_order(class_vectors.size())};
}

ConfidenceVector angular_confidences(const Vec& query,
                                     const std::vector<Vec>& class_vectors,
                                     const Head& head) {
    if (head.kind != HeadKind::AngSoftmax && head.kind != HeadKind::AngDR)
        throw std::invalid_argument("angular_confidences: head is not an angular kind");
    std::vector<double> angles(class_vectors.size());
    for (std::size_t c = 0; c < class_vectors.size(); ++c)
        angles[c] = angular_distance(query, class_vectors[c]);
    if (head.kind == HeadKind::AngSoftmax) return softmax_confidences(angles);
    return dr_confidences(angles, head.rho());
}

double normalized_confidence(const Vec& query,
                             const std::vector<Vec>& class_vectors,
                             const Head& head, int target) {
    const ConfidenceVector conf =
        is_cosine_kind(head.kind) ? cosine_confidences(query, class_vectors, head, target)
                                  : angular_confidences(query, class_vectors, head);
    return conf.probs[static_cast<std::size_t>(target)];
}

}  // namespace drml
