#include "drml/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace drml {

std::string split_to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw std::invalid_argument("unknown split");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw std::invalid_argument("unknown split tag: " + s);
}

const std::vector<int>& Dataset::classes_of(Split s) const {
    switch (s) {
        case Split::Train: return train_classes;
        case Split::Val: return val_classes;
        case Split::Test: return test_classes;
    }
    throw std::invalid_argument("unknown split");
}

Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
    if (config.n_classes < 3)
        throw std::invalid_argument("generate_synthetic: need at least 3 classes");
    if (config.dim < 1 || config.points_per_class < 1)
        throw std::invalid_argument("generate_synthetic: invalid dims or point count");
    const double frac_sum = config.train_frac + config.val_frac + config.test_frac;
    if (std::abs(frac_sum - 1.0) > 1e-9)
        throw std::invalid_argument("generate_synthetic: split fractions must sum to 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mean_dist(-config.separation,
                                                     config.separation);
    std::normal_distribution<double> noise(0.0, 1.0);

    Dataset ds;
    for (std::size_t c = 0; c < config.n_classes; ++c) {
        Vec mean(config.dim);
        for (double& m : mean) m = mean_dist(rng);
        for (std::size_t p = 0; p < config.points_per_class; ++p) {
            Vec x(config.dim);
            for (std::size_t k = 0; k < config.dim; ++k)
                x[k] = mean[k] + config.spread * noise(rng);
            ds.points.push_back({std::move(x), static_cast<int>(c)});
        }
    }

    std::vector<int> class_ids(config.n_classes);
    std::iota(class_ids.begin(), class_ids.end(), 0);
    std::shuffle(class_ids.begin(), class_ids.end(), rng);
    const auto n = static_cast<double>(config.n_classes);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(config.train_frac * n));
    const std::size_t n_val =
        static_cast<std::size_t>(std::llround(config.val_frac * n));
    if (n_train + n_val > config.n_classes)
        throw std::invalid_argument("generate_synthetic: split fractions leave no test classes");
    ds.train_classes.assign(class_ids.begin(), class_ids.begin() + n_train);
    ds.val_classes.assign(class_ids.begin() + n_train,
                          class_ids.begin() + n_train + n_val);
    ds.test_classes.assign(class_ids.begin() + n_train + n_val, class_ids.end());
    return ds;
}

Episode sample_episode(const Dataset& dataset, Split split, std::size_t n_way,
                       std::size_t k_shot, std::size_t n_query,
                       std::mt19937_64& rng) {
    const std::vector<int>& split_classes = dataset.classes_of(split);
    if (n_way < 2 || split_classes.size() < n_way)
        throw std::invalid_argument("sample_episode: not enough classes in split");

    std::vector<int> pool = split_classes;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(n_way);

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.points.size(); ++i)
        by_class[dataset.points[i].class_id].push_back(i);

    Episode ep;
    ep.classes = pool;
    for (int c : pool) {
        std::vector<std::size_t>& indices = by_class[c];
        if (indices.size() < k_shot + n_query)
            throw std::invalid_argument("sample_episode: class has too few points");
        std::shuffle(indices.begin(), indices.end(), rng);
        for (std::size_t i = 0; i < k_shot; ++i)
            ep.support.push_back(dataset.points[indices[i]]);
        for (std::size_t i = k_shot; i < k_shot + n_query; ++i)
            ep.query.push_back(dataset.points[indices[i]]);
    }
    return ep;
}

namespace {

bool is_numeric_field(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end != s.c_str() && *end == '\0';
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open " + path);

    Dataset ds;
    std::map<int, Split> class_split;
    std::string line;
    std::size_t dim = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields = split_line(line);
        if (first) {
            first = false;
            if (!is_numeric_field(fields[0])) continue;  // header row
        }
        if (fields.size() < 3)
            throw std::runtime_error("load_csv: row with fewer than 3 fields");
        const int class_id = std::stoi(fields[0]);
        const Split split = split_from_string(fields[1]);
        Vec x;
        for (std::size_t i = 2; i < fields.size(); ++i) {
            if (!is_numeric_field(fields[i]))
                throw std::runtime_error("load_csv: non-numeric feature: " + fields[i]);
            x.push_back(std::stod(fields[i]));
        }
        if (dim == 0) dim = x.size();
        if (x.size() != dim)
            throw std::runtime_error("load_csv: ragged rows");
        auto it = class_split.find(class_id);
        if (it == class_split.end()) {
            class_split[class_id] = split;
        } else if (it->second != split) {
            throw std::runtime_error("load_csv: class appears in two splits");
        }
        ds.points.push_back({std::move(x), class_id});
    }
    for (const auto& [class_id, split] : class_split) {
        switch (split) {
            case Split::Train: ds.train_classes.push_back(class_id); break;
            case Split::Val: ds.val_classes.push_back(class_id); break;
            case Split::Test: ds.test_classes.push_back(class_id); break;
        }
    }
    return ds;
}

void save_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot open " + path);
    std::map<int, Split> class_split;
    for (int c : dataset.train_classes) class_split[c] = Split::Train;
    for (int c : dataset.val_classes) {
        if (class_split.count(c))
            throw std::runtime_error("save_csv: overlapping splits");
        class_split[c] = Split::Val;
    }
    for (int c : dataset.test_classes) {
        if (class_split.count(c))
            throw std::runtime_error("save_csv: overlapping splits");
        class_split[c] = Split::Test;
    }
    out.precision(17);
    for (const LabeledPoint& p : dataset.points) {
        out << p.class_id << ',' << split_to_string(class_split.at(p.class_id));
        for (double v : p.features) out << ',' << v;
        out << '\n';
    }
}

}  // namespace drml
