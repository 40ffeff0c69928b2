#pragma once

#include <string>
#include <vector>

#include "drml/core_math.hpp"

namespace drml {

enum class HeadKind {
    SoftmaxSq,    // softmax over negative squared distance
    DR,           // distance-ratio: softmax over -rho * ln(d)
    CosNormFace,  // s * cos(theta)
    CosSphereFace,// s * cos(2 theta)
    CosCosFace,   // s * (cos(theta) - m) on the target class
    CosArcFace,   // s * cos(theta + m) on the target class
    AngSoftmax,   // softmax head on angular distances
    AngDR,        // DR head on angular distances
};

struct Head {
    HeadKind kind = HeadKind::SoftmaxSq;
    double log_rho = 2.0;  // rho = exp(log_rho), DR/AngDR only
    double scale_s = 2.0;  // cosine family
    double margin_m = 0.0; // cosine family (margin-bearing kinds)

    double rho() const;
};

HeadKind head_kind_from_string(const std::string& name);
std::string head_kind_to_string(HeadKind kind);
bool is_cosine_kind(HeadKind kind);
bool is_dr_kind(HeadKind kind);

struct ConfidenceVector {
    std::vector<double> probs;      // in [0,1], sum to 1
    std::vector<int> class_order;   // class id per entry
};

// Softmax over negative squared distances, max-logit subtracted.
ConfidenceVector softmax_confidences(const std::vector<double>& distances);

// Distance-ratio confidences: d_c^{-rho} / sum_y d_y^{-rho}, computed as
// a softmax over -rho*ln(d). Zero distances take the degenerate rule:
// a single zero gets probability 1, several zeros split it uniformly.
ConfidenceVector dr_confidences(const std::vector<double>& distances, double rho);

// -ln(prob of true_class), probability floored at 1e-30.
double cross_entropy(const ConfidenceVector& conf, int true_class);

// Cosine-similarity heads on unit vectors. The margin (SphereFace angle
// multiplier, CosFace subtraction, ArcFace additive angle) applies only
// to the target class logit; all other logits are s*cos(theta).
ConfidenceVector cosine_confidences(const Vec& query,
                                    const std::vector<Vec>& class_vectors,
                                    const Head& head, int target);

// Angular heads: angular distance to each class vector fed through the
// softmax or DR head.
ConfidenceVector angular_confidences(const Vec& query,
                                     const std::vector<Vec>& class_vectors,
                                     const Head& head);

// Target-class confidence for a query against a set of class vectors,
// dispatching on the head kind (cosine vs angular). Used by the sphere
// surface sampler.
double normalized_confidence(const Vec& query,
                             const std::vector<Vec>& class_vectors,
                             const Head& head, int target);

}  // namespace drml
