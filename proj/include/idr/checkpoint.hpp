#pragma once

#include <span>
#include <string>
#include <vector>

#include "idr/config.hpp"
#include "idr/model.hpp"

namespace idr::checkpoint {

// Checkpoint layout: <base>.manifest (text: names/shapes/offsets plus the
// config echo) and <base>.blob (one flat little-endian float64 buffer).
// Everything needed to resume bit-identically is included: weights, SGD
// velocity buffers, prototypes, relation matrices and deletion counters.

struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t count = 0;
};

struct Snapshot {
    int iteration = 0;
    config::RunConfig cfg;
    std::vector<Entry> entries;
    std::vector<double> blob;

    const Entry* find(const std::string& name) const;
    std::span<const double> view(const Entry& e) const {
        return {blob.data() + e.offset, e.count};
    }
    std::span<const double> view(const std::string& name) const;
};

void save(const std::string& base, const config::RunConfig& cfg, const model::IdrModel& m,
          const std::vector<std::vector<double>>& velocities, int iteration);

Snapshot load(const std::string& base);

// Rebuilds model state (weights, prototypes, relations, counters) and the
// optimizer velocities from a snapshot. The model must have been created
// from the snapshot's config.
void restore(const Snapshot& snap, model::IdrModel& m,
             std::vector<std::vector<double>>& velocities);

}  // namespace idr::checkpoint
