#pragma once

#include <vector>

#include "drml/core_math.hpp"

namespace drml {

struct LabeledPoint {
    Vec features;
    int class_id = 0;
};

enum class DistanceMode { Prototype, NearestNeighbor };

// N-way K-shot support set plus queries over the same classes.
struct Episode {
    std::vector<LabeledPoint> support;
    std::vector<LabeledPoint> query;
    std::vector<int> classes;  // the N episode classes, in order
};

}  // namespace drml
