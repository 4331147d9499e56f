#include "venomguard/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "venomguard/error.hpp"

namespace venomguard {

namespace {

using T = ConfigType;

std::vector<ConfigKey> build_registry() {
    return {
        {"pca.k", T::Count, "32", "principal components kept (clamped to min(rows, dims) when not set explicitly)", {}},

        {"seesaw.p", T::Real, "0.8", "seesaw mitigation exponent", {}},
        {"seesaw.q", T::Real, "2.0", "seesaw compensation exponent", {}},
        {"seesaw.count_mode", T::Text, "static", "class counts: static or online", {"static", "online"}},
        {"rwwce.w_hh", T::Real, "1", "cost of harmless -> other harmless", {}},
        {"rwwce.w_hv", T::Real, "2", "cost of harmless -> venomous", {}},
        {"rwwce.w_vh", T::Real, "5", "cost of venomous -> harmless", {}},
        {"rwwce.w_vv", T::Real, "2", "cost of venomous -> other venomous", {}},
        {"loss.clamp_eps", T::Real, "1e-12", "probability clamp before logs", {}},

        {"adamw.beta1", T::Real, "0.9", "first-moment decay", {}},
        {"adamw.beta2", T::Real, "0.999", "second-moment decay", {}},
        {"adamw.eps", T::Real, "1e-8", "denominator epsilon", {}},
        {"adamw.weight_decay", T::Real, "2e-5", "decoupled weight decay", {}},

        {"prior.hidden", T::Count, "256", "hidden width of the prior MLP", {}},
        {"prior.dropout", T::Real, "0.3", "dropout rate after each hidden layer", {}},
        {"prior.lambda", T::Real, "10", "positive-term weight in the location loss", {}},
        {"prior.epochs", T::Count, "30", "training epochs", {}},
        {"prior.batch_size", T::Count, "256", "samples per step", {}},
        {"prior.seed", T::Count, "0", "seed for initialization, sampling and dropout", {}},
        {"prior.base_lr", T::Real, "1e-3", "peak learning rate", {}},
        {"prior.warmup_lr", T::Real, "1e-5", "learning rate at step 0", {}},
        {"prior.final_lr", T::Real, "0", "learning rate at the last step", {}},
        {"prior.warmup_epochs", T::Count, "1", "linear warmup length in epochs", {}},
        {"prior.normalize_prototypes", T::Flag, "true", "L2-normalize class prototypes", {}},

        {"infer.tau", T::Real, "0.5", "confidence below which escalation applies", {}},
        {"infer.top_k", T::Count, "5", "candidates searched for a venomous class", {}},
        {"infer.escalate", T::Flag, "true", "apply venomous escalation", {}},

        {"metric.w1", T::Real, "1", "weight of macro F1", {}},
        {"metric.w2", T::Real, "1", "weight of 100 - P1", {}},
        {"metric.w3", T::Real, "2", "weight of 100 - P2", {}},
        {"metric.w4", T::Real, "5", "weight of 100 - P3", {}},
        {"metric.w5", T::Real, "2", "weight of 100 - P4", {}},
        {"metric.pdenom", T::Text, "status", "P1..P4 denominator: status, all or errors", {"status", "all", "errors"}},
        {"metric.f1_all_classes", T::Flag, "false", "average F1 over zero-support classes too", {}},

        {"synth.seed", T::Count, "7", "generator seed", {}},
        {"synth.n_classes", T::Count, "50", "number of classes", {}},
        {"synth.imbalance_ratio", T::Real, "100", "head / tail class count", {}},
        {"synth.dims_meta", T::Count, "8", "metadata dimensions", {}},
        {"synth.dims_proto", T::Count, "16", "embedding dimensions", {}},
        {"synth.venom_fraction", T::Real, "0.25", "fraction of venomous classes", {}},
        {"synth.location_informativeness", T::Real, "0.8", "probability that metadata follows the class", {}},
        {"synth.n_observations", T::Count, "5000", "observations across both splits", {}},
        {"synth.images_min", T::Count, "1", "fewest images per observation", {}},
        {"synth.images_max", T::Count, "3", "most images per observation", {}},
        {"synth.logit_scale", T::Real, "6", "true-class logit offset", {}},
        {"synth.logit_noise", T::Real, "3", "logit noise stddev", {}},
        {"synth.embedding_noise", T::Real, "0.1", "embedding noise stddev", {}},
        {"synth.meta_spread", T::Real, "3", "range of metadata class means", {}},
        {"synth.meta_noise", T::Real, "1", "metadata noise stddev", {}},
        {"synth.test_stride", T::Count, "5", "every n-th observation of a class goes to test", {}},

        {"validate.mode", T::Text, "strict", "strict or drop", {"strict", "drop"}},

        {"gradcheck.trials", T::Count, "20", "random instances per loss", {}},
        {"gradcheck.seed", T::Count, "0", "instance seed", {}},
        {"gradcheck.step", T::Real, "1e-6", "central difference step", {}},
        {"gradcheck.tolerance", T::Real, "1e-4", "largest accepted relative error", {}},
    };
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

bool parse_real(const std::string& v, double& out) {
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_count(const std::string& v, std::uint64_t& out) {
    const char* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_flag(const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return out = true, true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return out = false, true;
    return false;
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::registry() {
    static const std::vector<ConfigKey> keys = build_registry();
    return keys;
}

const ConfigKey* RunConfig::find_key(std::string_view name) {
    for (const auto& k : registry()) {
        if (k.name == name) return &k;
    }
    return nullptr;
}

RunConfig::RunConfig() {
    for (const auto& k : registry()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const ConfigKey* k = find_key(key);
    if (!k) throw_argument("unknown config key `" + key + "`");
    bool ok = true;
    switch (k->type) {
        case T::Real: {
            double d;
            ok = parse_real(value, d);
            break;
        }
        case T::Count: {
            std::uint64_t n;
            ok = parse_count(value, n);
            break;
        }
        case T::Flag: {
            bool b;
            ok = parse_flag(value, b);
            break;
        }
        case T::Text:
            ok = k->choices.empty() ||
                 std::find(k->choices.begin(), k->choices.end(), value) != k->choices.end();
            break;
    }
    if (!ok) throw_argument("invalid value `" + value + "` for config key `" + key + "`");
    values_[key] = value;
    explicit_.insert(key);
}

void RunConfig::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw_argument("override `" + std::string(assignment) + "` is not key=value");
    }
    set(std::string(trim(assignment.substr(0, eq))), std::string(trim(assignment.substr(eq + 1))));
}

void RunConfig::load_text(std::string_view text, const std::string& origin) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::Parse, origin + ": expected `key = value`", line_no);
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw Error(ErrorCode::Parse, origin + ": missing key", line_no);
        const std::string where = origin + ":" + std::to_string(line_no) + ": ";
        if (!find_key(key)) throw_argument(where + "unknown config key `" + key + "`");
        try {
            set(key, value);
        } catch (const Error&) {
            throw_argument(where + "invalid value `" + value + "` for config key `" + key + "`");
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    load_text(buf.str(), path.string());
}

const std::string& RunConfig::raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw_argument("unknown config key `" + key + "`");
    return it->second;
}

double RunConfig::real(const std::string& key) const {
    double d = 0.0;
    if (!parse_real(raw(key), d)) throw_argument("config key `" + key + "` is not a number");
    return d;
}

std::uint64_t RunConfig::count(const std::string& key) const {
    std::uint64_t n = 0;
    if (!parse_count(raw(key), n)) throw_argument("config key `" + key + "` is not a count");
    return n;
}

bool RunConfig::flag(const std::string& key) const {
    bool b = false;
    if (!parse_flag(raw(key), b)) throw_argument("config key `" + key + "` is not a flag");
    return b;
}

std::string RunConfig::dump(const std::vector<std::string>& prefixes) const {
    std::string out;
    for (const auto& k : registry()) {
        const bool wanted =
            prefixes.empty() || std::any_of(prefixes.begin(), prefixes.end(), [&](const auto& p) {
                return k.name.compare(0, p.size(), p) == 0;
            });
        if (wanted) out += k.name + " = " + values_.at(k.name) + "\n";
    }
    return out;
}

}  // namespace venomguard
