#include "idr/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace idr::checkpoint {

namespace {
constexpr const char* kMagic = "IDRCKPT 1";
}

const Entry* Snapshot::find(const std::string& name) const {
    for (const Entry& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

std::span<const double> Snapshot::view(const std::string& name) const {
    const Entry* e = find(name);
    if (!e) throw CompatibilityError("checkpoint entry '" + name + "' missing");
    return view(*e);
}

void save(const std::string& base, const config::RunConfig& cfg, const model::IdrModel& m,
          const std::vector<std::vector<double>>& velocities, int iteration) {
    std::vector<Entry> entries;
    std::vector<double> blob;
    auto push = [&](const std::string& name, std::vector<int> shape,
                    std::span<const double> data) {
        entries.push_back({name, std::move(shape), blob.size(), data.size()});
        blob.insert(blob.end(), data.begin(), data.end());
    };

    for (std::size_t i = 0; i < m.params.names.size(); ++i)
        push("param/" + m.params.names[i], m.params.tensors[i].shape(),
             m.params.tensors[i].values());
    if (velocities.size() != m.params.tensors.size())
        throw CompatibilityError("velocity buffer count does not match parameters");
    for (std::size_t i = 0; i < velocities.size(); ++i)
        push("velocity/" + m.params.names[i], m.params.tensors[i].shape(), velocities[i]);
    push("prototypes", {m.prototypes.num_classes, m.prototypes.channels}, m.prototypes.rows);
    const int k = m.relations.num_classes;
    push("relation_mean", {k, k}, m.relations.mean);
    push("relation_var", {k, k}, m.relations.var);
    std::vector<double> counts(m.relations.counts.begin(), m.relations.counts.end());
    push("deletion_counts", {k}, counts);

    std::ofstream mf(base + ".manifest");
    if (!mf) throw CompatibilityError("cannot write manifest '" + base + ".manifest'");
    mf << kMagic << "\n";
    mf << "iteration " << iteration << "\n";
    mf << "prototype_mode "
       << (m.prototypes.mode == grouping::PrototypeMode::orthogonal    ? "orthogonal"
           : m.prototypes.mode == grouping::PrototypeMode::dataset_level ? "dataset_level"
                                                                         : "none")
       << "\n";
    mf << "entries " << entries.size() << "\n";
    mf.precision(17);
    for (const Entry& e : entries) {
        mf << e.name << " " << e.offset << " " << e.count << " " << e.shape.size();
        for (int d : e.shape) mf << " " << d;
        mf << "\n";
    }
    mf << "config_begin\n" << cfg.to_text() << "config_end\n";
    if (!mf.good()) throw CompatibilityError("manifest write failed");

    std::ofstream bf(base + ".blob", std::ios::binary);
    if (!bf) throw CompatibilityError("cannot write blob '" + base + ".blob'");
    // x86-64 doubles are already little-endian; written raw
    bf.write(reinterpret_cast<const char*>(blob.data()),
             static_cast<std::streamsize>(blob.size() * sizeof(double)));
    if (!bf.good()) throw CompatibilityError("blob write failed");
}

Snapshot load(const std::string& base) {
    std::ifstream mf(base + ".manifest");
    if (!mf) throw CompatibilityError("cannot open manifest '" + base + ".manifest'");
    Snapshot snap;
    std::string line;
    std::getline(mf, line);
    if (line != kMagic) throw CompatibilityError("bad checkpoint magic in '" + base + "'");
    std::string word;
    mf >> word >> snap.iteration;
    std::string proto_mode;
    mf >> word >> proto_mode;
    std::size_t n = 0;
    mf >> word >> n;
    std::getline(mf, line);
    for (std::size_t i = 0; i < n; ++i) {
        Entry e;
        int rank = 0;
        mf >> e.name >> e.offset >> e.count >> rank;
        for (int d = 0; d < rank; ++d) {
            int v;
            mf >> v;
            e.shape.push_back(v);
        }
        snap.entries.push_back(std::move(e));
    }
    std::getline(mf, line);
    std::getline(mf, line);
    if (line != "config_begin") throw CompatibilityError("manifest missing config echo");
    std::ostringstream cfg_text;
    while (std::getline(mf, line) && line != "config_end") cfg_text << line << "\n";
    snap.cfg = config::RunConfig::from_text(cfg_text.str());

    std::ifstream bf(base + ".blob", std::ios::binary);
    if (!bf) throw CompatibilityError("cannot open blob '" + base + ".blob'");
    bf.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(bf.tellg());
    bf.seekg(0);
    snap.blob.resize(bytes / sizeof(double));
    bf.read(reinterpret_cast<char*>(snap.blob.data()), static_cast<std::streamsize>(bytes));
    if (!bf.good()) throw CompatibilityError("blob read failed");
    return snap;
}

void restore(const Snapshot& snap, model::IdrModel& m,
             std::vector<std::vector<double>>& velocities) {
    for (std::size_t i = 0; i < m.params.names.size(); ++i) {
        auto data = snap.view("param/" + m.params.names[i]);
        Tensor& t = m.params.tensors[i];
        if (static_cast<std::size_t>(t.numel()) != data.size())
            throw CompatibilityError("checkpoint/model size mismatch for '" +
                                     m.params.names[i] + "'");
        std::copy(data.begin(), data.end(), t.values().begin());
    }
    velocities.resize(m.params.tensors.size());
    for (std::size_t i = 0; i < velocities.size(); ++i) {
        auto data = snap.view("velocity/" + m.params.names[i]);
        velocities[i].assign(data.begin(), data.end());
    }
    auto proto = snap.view("prototypes");
    if (proto.size() != m.prototypes.rows.size())
        throw CompatibilityError("checkpoint prototype size mismatch");
    std::copy(proto.begin(), proto.end(), m.prototypes.rows.begin());
    auto mean = snap.view("relation_mean");
    auto var = snap.view("relation_var");
    if (mean.size() != m.relations.mean.size() || var.size() != m.relations.var.size())
        throw CompatibilityError("checkpoint relation size mismatch");
    std::copy(mean.begin(), mean.end(), m.relations.mean.begin());
    std::copy(var.begin(), var.end(), m.relations.var.begin());
    auto counts = snap.view("deletion_counts");
    for (std::size_t i = 0; i < counts.size() && i < m.relations.counts.size(); ++i)
        m.relations.counts[i] = static_cast<long long>(counts[i]);
}

}  // namespace idr::checkpoint
