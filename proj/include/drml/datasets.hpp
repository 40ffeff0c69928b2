#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "drml/episode.hpp"

namespace drml {

enum class Split { Train, Val, Test };

std::string split_to_string(Split s);
Split split_from_string(const std::string& s);

struct Dataset {
    std::vector<LabeledPoint> points;
    std::vector<int> train_classes;
    std::vector<int> val_classes;
    std::vector<int> test_classes;

    const std::vector<int>& classes_of(Split s) const;
};

struct SyntheticConfig {
    std::size_t n_classes = 20;
    std::size_t dim = 16;
    std::size_t points_per_class = 40;
    double separation = 5.0;  // half-width of the hypercube for class means
    double spread = 1.0;      // per-point isotropic noise std
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;
};

// Isotropic Gaussian blobs with a seeded class-to-split shuffle.
Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

// N classes without replacement; per class K supports + Q queries drawn
// without replacement and disjoint.
Episode sample_episode(const Dataset& dataset, Split split, std::size_t n_way,
                       std::size_t k_shot, std::size_t n_query,
                       std::mt19937_64& rng);

// Rows of `class_id,split_tag,f1..fD`; optional header detected by a
// non-numeric first field. Round-trips exactly with save_csv.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& dataset, const std::string& path);

}  // namespace drml
