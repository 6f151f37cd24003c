#include "idr/config.hpp"

#include <fstream>
#include <sstream>

namespace idr::config {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    T out;
    is >> out;
    if (is.fail() || !is.eof())
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
    return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "k") num_classes = parse_num<int>(key, value);
    else if (key == "height") height = parse_num<int>(key, value);
    else if (key == "width") width = parse_num<int>(key, value);
    else if (key == "rule_id") rule_id = parse_num<int>(key, value);
    else if (key == "cue_prob") cue_prob = parse_num<double>(key, value);
    else if (key == "noise_sigma") noise_sigma = parse_num<double>(key, value);
    else if (key == "val_size") val_size = parse_num<int>(key, value);
    else if (key == "z") channels = parse_num<int>(key, value);
    else if (key == "width0") width0 = parse_num<int>(key, value);
    else if (key == "width1") width1 = parse_num<int>(key, value);
    else if (key == "context") context = value;
    else if (key == "enhancement") enhancement = value;
    else if (key == "relation_update") relation_update = value;
    else if (key == "deletion") deletion = value;
    else if (key == "use_mean_relation") use_mean_relation = parse_bool(key, value);
    else if (key == "use_var_relation") use_var_relation = parse_bool(key, value);
    else if (key == "base_lr") base_lr = parse_num<double>(key, value);
    else if (key == "sgd_momentum") sgd_momentum = parse_num<double>(key, value);
    else if (key == "weight_decay") weight_decay = parse_num<double>(key, value);
    else if (key == "batch_size") batch_size = parse_num<int>(key, value);
    else if (key == "total_iters") total_iters = parse_num<int>(key, value);
    else if (key == "alpha") alpha = parse_num<double>(key, value);
    else if (key == "prototype_momentum") prototype_momentum = parse_num<double>(key, value);
    else if (key == "mean_momentum") mean_momentum = parse_num<double>(key, value);
    else if (key == "var_momentum") var_momentum = parse_num<double>(key, value);
    else if (key == "threshold") threshold = parse_num<double>(key, value);
    else if (key == "seed") seed = parse_num<std::uint64_t>(key, value);
    else if (key == "val_interval") val_interval = parse_num<int>(key, value);
    else if (key == "augment") augment = parse_bool(key, value);
    else if (key == "diag_before_step") diag_before_step = parse_bool(key, value);
    else if (key == "prototype_update_before_step")
        prototype_update_before_step = parse_bool(key, value);
    else if (key == "diag_normalization") diag_normalization = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return from_text(os.str());
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "k = " << num_classes << "\nheight = " << height << "\nwidth = " << width
       << "\nrule_id = " << rule_id << "\ncue_prob = " << cue_prob
       << "\nnoise_sigma = " << noise_sigma << "\nval_size = " << val_size
       << "\nz = " << channels << "\nwidth0 = " << width0 << "\nwidth1 = " << width1
       << "\ncontext = " << context << "\nenhancement = " << enhancement
       << "\nrelation_update = " << relation_update << "\ndeletion = " << deletion
       << "\nuse_mean_relation = " << (use_mean_relation ? "true" : "false")
       << "\nuse_var_relation = " << (use_var_relation ? "true" : "false")
       << "\nbase_lr = " << base_lr << "\nsgd_momentum = " << sgd_momentum
       << "\nweight_decay = " << weight_decay << "\nbatch_size = " << batch_size
       << "\ntotal_iters = " << total_iters << "\nalpha = " << alpha
       << "\nprototype_momentum = " << prototype_momentum
       << "\nmean_momentum = " << mean_momentum << "\nvar_momentum = " << var_momentum
       << "\nthreshold = " << threshold << "\nseed = " << seed
       << "\nval_interval = " << val_interval << "\naugment = " << (augment ? "true" : "false")
       << "\ndiag_before_step = " << (diag_before_step ? "true" : "false")
       << "\nprototype_update_before_step = "
       << (prototype_update_before_step ? "true" : "false")
       << "\ndiag_normalization = " << diag_normalization << "\n";
    return os.str();
}

void RunConfig::validate() const {
    if (context != "identity" && context != "pooling")
        throw ConfigError("context must be identity or pooling");
    if (enhancement != "none" && enhancement != "orthogonal" && enhancement != "dataset_level")
        throw ConfigError("enhancement must be none, orthogonal or dataset_level");
    if (relation_update != "deletion_diagnostics" && relation_update != "backprop" &&
        relation_update != "frozen")
        throw ConfigError("relation_update must be deletion_diagnostics, backprop or frozen");
    if (deletion != "balanced" && deletion != "random")
        throw ConfigError("deletion must be balanced or random");
    if (diag_normalization != "global" && diag_normalization != "per_pixel")
        throw ConfigError("diag_normalization must be global or per_pixel");
    if (height % 8 != 0 || width % 8 != 0)
        throw ConfigError("height and width must be divisible by 8");
    if (batch_size < 1 || total_iters < 1) throw ConfigError("batch_size/total_iters must be >= 1");
    if (channels < num_classes)
        throw ConfigError("z must be >= k (orthogonal prototypes need K <= Z)");
}

model::ModelConfig RunConfig::model_config() const {
    model::ModelConfig mc;
    mc.num_classes = num_classes;
    mc.channels = channels;
    mc.widths = {width0, width1, channels};
    mc.context = context == "pooling" ? model::ContextVariant::pooling
                                      : model::ContextVariant::identity;
    if (enhancement == "orthogonal") mc.enhancement = grouping::PrototypeMode::orthogonal;
    else if (enhancement == "dataset_level") mc.enhancement = grouping::PrototypeMode::dataset_level;
    else mc.enhancement = grouping::PrototypeMode::none;
    if (relation_update == "backprop") mc.relation_update = model::RelationUpdateMode::backprop;
    else if (relation_update == "frozen") mc.relation_update = model::RelationUpdateMode::frozen;
    else mc.relation_update = model::RelationUpdateMode::deletion_diagnostics;
    mc.use_mean_relation = use_mean_relation;
    mc.use_var_relation = use_var_relation;
    mc.threshold = threshold;
    mc.alpha = alpha;
    mc.prototype_momentum = prototype_momentum;
    mc.m_mean = mean_momentum;
    mc.m_var = var_momentum;
    mc.seed = seed;
    return mc;
}

scenes::SceneConfig RunConfig::scene_config() const {
    scenes::SceneConfig sc;
    sc.num_classes = num_classes;
    sc.height = height;
    sc.width = width;
    sc.rule_id = rule_id;
    sc.noise_sigma = noise_sigma;
    sc.rule.cue_prob = cue_prob;
    return sc;
}

diagnostics::DeletionMode RunConfig::deletion_mode() const {
    return deletion == "random" ? diagnostics::DeletionMode::random_uniform
                                : diagnostics::DeletionMode::balanced;
}

diagnostics::DeltaNormalization RunConfig::delta_normalization() const {
    return diag_normalization == "per_pixel" ? diagnostics::DeltaNormalization::per_pixel
                                             : diagnostics::DeltaNormalization::global_map;
}

}  // namespace idr::config
