#include "config.hpp"

#include "dps/random.hpp"

#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

namespace dps::app {

namespace {

using json = nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError((path.empty() ? std::string("config") : path) + ": " + msg);
}

template <typename T>
T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(path, "expected true or false");
        return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(path, "expected a string");
        return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(path, "expected a number");
        return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            fail(path, "expected a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    } else {
        static_assert(std::is_same_v<T, int>);
        if (!v.is_number_integer()) fail(path, "expected an integer");
        const auto i = v.get<std::int64_t>();
        if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) fail(path, "integer out of range");
        return static_cast<int>(i);
    }
}

// Reads known keys of one object and rejects the rest.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        known_.insert(key);
        if (j_.contains(key)) out = convert<T>(j_.at(key), join(path_, key));
    }

    const json* child(const std::string& key) {
        known_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!known_.count(k)) fail(join(path_, k), "unknown field");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> known_;
};

bool plain_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    }
    return true;
}

template <typename F>
void checked(const std::string& path, F&& f) {
    try {
        f();
    } catch (const std::invalid_argument& e) {
        fail(path, e.what());
    }
}

}  // namespace

TargetDistribution TargetSpec::build() const {
    if (mixture) return make_mixture_target(name, *mixture);
    return make_target(name);
}

nlohmann::ordered_json TargetSpec::to_json() const {
    if (!mixture) return name;
    nlohmann::ordered_json j;
    j["name"] = name;
    j["weights"] = std::vector<double>(mixture->weights.data(), mixture->weights.data() + mixture->weights.size());
    auto means = nlohmann::ordered_json::array();
    for (const auto& m : mixture->means) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    j["means"] = means;
    j["variance"] = mixture->variance;
    return j;
}

TargetSpec parse_target(const json& j, const std::string& path) {
    TargetSpec spec;
    if (j.is_string()) {
        spec.name = j.get<std::string>();
        checked(path, [&] { make_target(spec.name); });
        return spec;
    }
    Fields f(j, path);
    spec.name = "mog";
    f.get("name", spec.name);
    if (!plain_name(spec.name)) fail(join(path, "name"), "names may use letters, digits, '_' and '-' only");
    GaussianMixture mix;
    std::vector<double> weights;
    const json* w = f.child("weights");
    const json* means = f.child("means");
    if (!w) fail(join(path, "weights"), "required for an inline mixture");
    if (!means) fail(join(path, "means"), "required for an inline mixture");
    if (!w->is_array()) fail(join(path, "weights"), "expected an array of numbers");
    for (std::size_t i = 0; i < w->size(); ++i) weights.push_back(convert<double>((*w)[i], join(path, "weights")));
    if (!means->is_array()) fail(join(path, "means"), "expected an array of vectors");
    for (std::size_t i = 0; i < means->size(); ++i) {
        const json& m = (*means)[i];
        const std::string mp = join(path, "means") + "[" + std::to_string(i) + "]";
        if (!m.is_array()) fail(mp, "expected an array of numbers");
        Eigen::VectorXd v(static_cast<Eigen::Index>(m.size()));
        for (std::size_t k = 0; k < m.size(); ++k) v[static_cast<Eigen::Index>(k)] = convert<double>(m[k], mp);
        mix.means.push_back(v);
    }
    mix.weights = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    mix.variance = 1.0;
    f.get("variance", mix.variance);
    f.finish();
    checked(path, [&] { mix.validate(); });
    spec.mixture = mix;
    return spec;
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
    nlohmann::ordered_json j;
    j["target"] = target.to_json();
    j["mode"] = mode;
    j["seed"] = seed;
    j["workers"] = workers;
    j["train"] = {{"iterations", train.iterations},     {"learning_rate", train.learning_rate},
                  {"clip_norm", train.clip_norm},       {"lambda", train.lambda},
                  {"batch_size", train.batch_size},     {"hutchinson", train.hutchinson},
                  {"checkpoint_every", train.checkpoint_every}};
    j["lmc"] = {{"step", train.lmc.step},
                {"iterations", train.lmc.iterations},
                {"batch_size", train.lmc.batch_size},
                {"refresh_interval", train.lmc.refresh_interval}};
    j["architecture"] = {{"hidden", train.arch.hidden},
                         {"embedding_dim", train.arch.embedding.dim},
                         {"frequency_base", train.arch.embedding.frequency_base},
                         {"time_scale", train.arch.embedding.time_scale}};
    j["sampler"] = {{"steps", sampler.steps}, {"samples", sampler.samples}, {"radius", sampler.radius}};
    j["evaluate"] = {{"metrics", evaluate.metrics},
                     {"k", evaluate.k},
                     {"reference_samples", evaluate.reference_samples},
                     {"score_time", evaluate.score_time},
                     {"score_samples", evaluate.score_samples}};
    return j;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(to_json().dump()); }

ExperimentConfig parse_config(const json& j) {
    Fields root(j, "");
    ExperimentConfig c;
    const json* target = root.child("target");
    if (!target) fail("target", "required");
    c.target = parse_target(*target);
    const std::string defaults = c.target.mixture ? std::string("mog") : c.target.name;
    c.train = TrainConfig::defaults_for(defaults);
    c.sampler = SamplerConfig::defaults_for(defaults);

    root.get("mode", c.mode);
    if (c.mode != "logdensity" && c.mode != "score") fail("mode", "expected \"logdensity\" or \"score\"");
    root.get("seed", c.seed);
    root.get("workers", c.workers);
    if (c.workers < 1) fail("workers", "must be >= 1");

    bool batch_given = false;
    if (const json* t = root.child("train")) {
        Fields f(*t, "train");
        f.get("iterations", c.train.iterations);
        f.get("learning_rate", c.train.learning_rate);
        f.get("clip_norm", c.train.clip_norm);
        f.get("lambda", c.train.lambda);
        batch_given = t->contains("batch_size");
        f.get("batch_size", c.train.batch_size);
        f.get("hutchinson", c.train.hutchinson);
        f.get("checkpoint_every", c.train.checkpoint_every);
        f.finish();
    }
    if (const json* l = root.child("lmc")) {
        Fields f(*l, "lmc");
        f.get("step", c.train.lmc.step);
        f.get("iterations", c.train.lmc.iterations);
        f.get("batch_size", c.train.lmc.batch_size);
        f.get("refresh_interval", c.train.lmc.refresh_interval);
        f.finish();
        // The collocation batch follows the LMC batch unless set explicitly.
        if (!batch_given && l->contains("batch_size")) c.train.batch_size = c.train.lmc.batch_size;
    }
    if (const json* a = root.child("architecture")) {
        Fields f(*a, "architecture");
        f.get("hidden", c.train.arch.hidden);
        f.get("embedding_dim", c.train.arch.embedding.dim);
        f.get("frequency_base", c.train.arch.embedding.frequency_base);
        f.get("time_scale", c.train.arch.embedding.time_scale);
        f.finish();
    }
    c.train.seed = c.seed;
    c.sampler.seed = c.seed;
    if (const json* s = root.child("sampler")) {
        Fields f(*s, "sampler");
        f.get("steps", c.sampler.steps);
        f.get("samples", c.sampler.samples);
        f.get("radius", c.sampler.radius);
        f.finish();
    }
    if (const json* e = root.child("evaluate")) {
        Fields f(*e, "evaluate");
        if (const json* m = f.child("metrics")) {
            if (!m->is_array()) fail("evaluate.metrics", "expected an array of strings");
            for (const auto& v : *m) {
                const auto name = convert<std::string>(v, "evaluate.metrics");
                if (name != "kl" && name != "mixing" && name != "score") {
                    fail("evaluate.metrics", "unknown metric '" + name + "' (expected kl, mixing or score)");
                }
                c.evaluate.metrics.push_back(name);
            }
        }
        f.get("k", c.evaluate.k);
        f.get("reference_samples", c.evaluate.reference_samples);
        f.get("score_time", c.evaluate.score_time);
        f.get("score_samples", c.evaluate.score_samples);
        f.finish();
        if (c.evaluate.k < 1) fail("evaluate.k", "must be >= 1");
        if (c.evaluate.reference_samples <= c.evaluate.k) fail("evaluate.reference_samples", "must exceed k");
        if (!(c.evaluate.score_time >= 0.0 && c.evaluate.score_time < 1.0)) fail("evaluate.score_time", "must lie in [0, 1)");
        if (c.evaluate.score_samples < 1) fail("evaluate.score_samples", "must be >= 1");
    }
    root.finish();
    checked("train", [&] { c.train.validate(); });
    checked("lmc", [&] { c.train.lmc.validate(); });
    checked("sampler", [&] { c.sampler.validate(); });
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(path.string() + ": cannot open");
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j);
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace dps::app
