#include "provlens/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "provlens/error.hpp"

namespace provlens {

namespace {

using json = nlohmann::json;

struct NodeRef {
    NodeKind kind;
    std::string label;
    auto operator<=>(const NodeRef&) const = default;
};

struct RawEvent {
    NodeRef src;
    NodeRef dst;
    Relation relation;
    Timestamp timestamp;
    TruthLabel truth;
};

/// Sorts by timestamp (stable), assigns dense ids in first-appearance order
/// and builds the dataset.
LabeledDataset assemble(std::vector<RawEvent> raw) {
    std::stable_sort(raw.begin(), raw.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });

    LabeledDataset ds;
    std::map<NodeRef, NodeId> ids;
    auto id_of = [&](const NodeRef& ref) {
        auto [it, inserted] = ids.try_emplace(ref, static_cast<NodeId>(ids.size()));
        if (inserted) ds.graph.add_node({it->second, ref.kind, ref.label});
        return it->second;
    };

    ds.labels.reserve(raw.size());
    for (const auto& r : raw) {
        const NodeId src = id_of(r.src);
        const NodeId dst = id_of(r.dst);
        ds.graph.append_event({src, dst, r.relation, r.timestamp});
        ds.labels.push_back(r.truth);
        if (r.truth == TruthLabel::Malicious) {
            if (!ds.attack_interval) {
                ds.attack_interval = std::pair{r.timestamp, r.timestamp};
            } else {
                ds.attack_interval->second = r.timestamp;
            }
        }
    }
    return ds;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

NodeKind expect_kind(std::string_view text, std::size_t line, const char* field) {
    if (auto k = parse_node_kind(text)) return *k;
    throw ParseError(line, std::string(field) + ": unknown node kind '" + std::string(text) +
                               "' (expected PROCESS, FILE or SOCKET)");
}

class LabelFactory {
public:
    std::string fresh(const std::string& prefix) { return prefix + std::to_string(++counters_[prefix]); }

    std::string pick(const ObjectPool& pool, std::mt19937_64& rng) {
        if (pool.labels.empty()) return fresh(pool.fresh_prefix);
        std::uniform_int_distribution<std::size_t> dist(0, pool.labels.size() - 1);
        return pool.labels[dist(rng)];
    }

private:
    std::map<std::string, std::uint64_t> counters_;
};

bool spawns_child(const Behavior& b) {
    return b.objects.kind == NodeKind::Process && b.objects.labels.empty();
}

double expected_events_per_draw(const BenignTemplate& t) {
    double total_weight = 0.0;
    double events = 0.0;
    for (const auto& b : t.mix) {
        total_weight += b.weight;
        double n = b.log_spawn || !spawns_child(b) ? 1.0 : 0.0;
        if (spawns_child(b)) n += static_cast<double>(b.child_script.size());
        events += b.weight * n;
    }
    return events / total_weight;
}

void validate(const ScenarioSpec& spec) {
    if (!(spec.duration_seconds > 0.0)) throw ArgumentError("scenario duration must be positive");
    for (const auto& t : spec.benign_templates) {
        if (t.process_label.empty()) throw ArgumentError("benign template with empty process label");
        if (!(t.rate_per_minute > 0.0)) {
            throw ArgumentError("template '" + t.process_label + "' has non-positive rate");
        }
        if (t.mix.empty()) throw ArgumentError("template '" + t.process_label + "' has empty mix");
        for (const auto& b : t.mix) {
            if (!(b.weight > 0.0)) {
                throw ArgumentError("template '" + t.process_label + "' has non-positive weight");
            }
            if (b.objects.labels.empty() && b.objects.fresh_prefix.empty()) {
                throw ArgumentError("template '" + t.process_label + "' has an empty object pool");
            }
        }
        if (expected_events_per_draw(t) <= 0.0) {
            throw ArgumentError("template '" + t.process_label + "' never emits events");
        }
    }
    double prev = -1.0;
    for (const auto& step : spec.attack_chain) {
        if (step.offset_seconds <= prev) {
            throw ArgumentError("attack step offsets must be strictly increasing");
        }
        if (step.offset_seconds < 0.0 || step.offset_seconds >= spec.duration_seconds) {
            throw ArgumentError("attack step offset " + std::to_string(step.offset_seconds) +
                                "s lies outside the scenario duration");
        }
        if (step.src_label.empty() || step.dst_label.empty()) {
            throw ArgumentError("attack step with empty label");
        }
        prev = step.offset_seconds;
    }
}

Timestamp at(const ScenarioSpec& spec, double seconds) {
    return spec.start + static_cast<Timestamp>(std::llround(seconds * 1e9));
}

} // namespace

ScenarioSpec default_scenario_spec() {
    ScenarioSpec spec;
    spec.start = 1523009700LL * kNanosPerSecond; // 2018-04-06T10:15:00Z
    spec.duration_seconds = 3600.0;
    spec.seed = 7;

    const ObjectPool fresh_client{NodeKind::Socket, {}, "client:"};

    BenignTemplate web{"nginx", {}, 20.0};
    web.mix = {
        {Relation::Recv, 0.3, {NodeKind::Socket, {"0.0.0.0:80"}, {}}, {}, true},
        {Relation::Read, 0.3,
         {NodeKind::File,
          {"/var/www/html/index.html", "/var/www/html/login.html", "/var/www/html/about.html",
           "/var/www/html/products.html", "/var/www/html/contact.html", "/var/www/html/app.js"},
          {}},
         {}, true},
        {Relation::Send, 0.3, fresh_client, {}, true},
        {Relation::Write, 0.1, {NodeKind::File, {"/var/log/nginx/access.log"}, {}}, {}, true},
    };

    // Login sessions appear as fresh processes without a recorded spawn edge.
    BenignTemplate ssh{"sshd", {}, 20.0};
    ssh.mix = {
        {Relation::Recv, 0.35, {NodeKind::Socket, {"0.0.0.0:22"}, {}}, {}, true},
        {Relation::Read, 0.25, {NodeKind::File, {"/etc/ssh/sshd_config", "/etc/passwd"}, {}}, {}, true},
        {Relation::Write, 0.3, {NodeKind::File, {"/var/log/auth.log"}, {}}, {}, true},
        {Relation::Clone,
         0.1,
         {NodeKind::Process, {}, "sshd-session#"},
         {
             {Relation::Read, {NodeKind::File, {"/etc/passwd", "/etc/group"}, {}}, 2.0},
             {Relation::Write, {NodeKind::File, {}, "/tmp/ssh-"}, 5.0},
             {Relation::Send, {NodeKind::Socket, {}, "client:"}, 5.0},
         },
         false},
    };

    BenignTemplate cron{"cron", {}, 20.0};
    cron.mix = {
        {Relation::Read, 0.4, {NodeKind::File, {"/etc/crontab"}, {}}, {}, true},
        {Relation::Write, 0.45, {NodeKind::File, {"/var/log/cron.log"}, {}}, {}, true},
        {Relation::Clone,
         0.15,
         {NodeKind::Process, {}, "cron-job#"},
         {
             {Relation::Read, {NodeKind::File, {"/var/log/nginx/access.log", "/etc/passwd"}, {}}, 1.0},
             {Relation::Write, {NodeKind::File, {}, "/tmp/cron-"}, 3.0},
         },
         true},
    };

    spec.benign_templates = {web, ssh, cron};

    const double t0 = 45.0 * 60.0;
    spec.attack_chain = {
        {NodeKind::Process, "nginx", NodeKind::Process, "bash", Relation::Execute, t0},
        {NodeKind::Process, "bash", NodeKind::File, "/etc/passwd", Relation::Read, t0 + 20.0},
        {NodeKind::Process, "bash", NodeKind::File, "/tmp/lib.so", Relation::Write, t0 + 40.0},
        {NodeKind::Process, "bash", NodeKind::Socket, "78.205.235.65:80", Relation::Send, t0 + 60.0},
    };
    return spec;
}

LabeledDataset generate_scenario(const ScenarioSpec& spec) {
    validate(spec);

    std::mt19937_64 rng(spec.seed);
    LabelFactory names;
    std::vector<RawEvent> raw;

    for (const auto& tmpl : spec.benign_templates) {
        const NodeRef subject{NodeKind::Process, tmpl.process_label};
        const double draws_per_second = tmpl.rate_per_minute / 60.0 / expected_events_per_draw(tmpl);
        std::exponential_distribution<double> gap(draws_per_second);
        std::vector<double> weights;
        for (const auto& b : tmpl.mix) weights.push_back(b.weight);
        std::discrete_distribution<std::size_t> choose(weights.begin(), weights.end());
        std::uniform_real_distribution<double> jitter(0.0, 0.5);

        for (double t = gap(rng); t < spec.duration_seconds; t += gap(rng)) {
            const Behavior& b = tmpl.mix[choose(rng)];
            const NodeRef object{b.objects.kind, names.pick(b.objects, rng)};
            const bool child = spawns_child(b);
            if (!child || b.log_spawn) {
                raw.push_back({subject, object, b.relation, at(spec, t), TruthLabel::Benign});
            }
            if (!child) continue;
            double ct = t;
            for (const auto& step : b.child_script) {
                ct += step.delay_seconds + jitter(rng);
                if (ct >= spec.duration_seconds) break;
                const NodeRef target{step.objects.kind, names.pick(step.objects, rng)};
                raw.push_back({object, target, step.relation, at(spec, ct), TruthLabel::Benign});
            }
        }
    }

    for (const auto& step : spec.attack_chain) {
        raw.push_back({{step.src_kind, step.src_label},
                       {step.dst_kind, step.dst_label},
                       step.relation,
                       at(spec, step.offset_seconds),
                       TruthLabel::Malicious});
    }
    return assemble(std::move(raw));
}

LabeledDataset parse_log(std::istream& lines) {
    std::vector<RawEvent> raw;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto fields = split_fields(line);
        if (fields.empty() || fields.front().starts_with('#')) continue;
        if (fields.size() < 6 || fields.size() > 7) {
            throw ParseError(lineno, "expected 6 or 7 fields, found " + std::to_string(fields.size()));
        }
        RawEvent r;
        r.src = {expect_kind(fields[0], lineno, "src_kind"), std::string(fields[1])};
        auto rel = parse_relation(fields[2]);
        if (!rel) {
            throw ParseError(lineno, "relation: unknown relation '" + std::string(fields[2]) +
                                         "'; valid relations: " + relation_alphabet());
        }
        r.relation = *rel;
        r.dst = {expect_kind(fields[3], lineno, "dst_kind"), std::string(fields[4])};

        const std::string ts(fields[5]);
        std::size_t used = 0;
        try {
            r.timestamp = std::stoll(ts, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != ts.size() || ts.empty()) {
            throw ParseError(lineno, "timestamp_ns: not an integer: '" + ts + "'");
        }

        r.truth = TruthLabel::Unknown;
        if (fields.size() == 7) {
            auto truth = parse_truth_label(fields[6]);
            if (!truth) {
                throw ParseError(lineno, "truth: expected BENIGN, MALICIOUS or UNKNOWN, found '" +
                                             std::string(fields[6]) + "'");
            }
            r.truth = *truth;
        }
        raw.push_back(std::move(r));
    }
    return assemble(std::move(raw));
}

std::string render_log(const LabeledDataset& ds) {
    std::ostringstream out;
    const auto events = ds.graph.events();
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        const auto& s = ds.graph.node(e.src);
        const auto& d = ds.graph.node(e.dst);
        out << to_string(s.kind) << ' ' << s.label << ' ' << to_string(e.relation) << ' '
            << to_string(d.kind) << ' ' << d.label << ' ' << e.timestamp << ' '
            << to_string(ds.labels[i]) << '\n';
    }
    return out.str();
}

json dataset_to_json(const LabeledDataset& ds) {
    json nodes = json::array();
    for (const auto& n : ds.graph.nodes()) {
        nodes.push_back({{"id", n.node_id}, {"kind", to_string(n.kind)}, {"label", n.label}});
    }
    // Events are compact [src, dst, relation, timestamp] tuples.
    json events = json::array();
    for (const auto& e : ds.graph.events()) {
        events.push_back(json::array({e.src, e.dst, to_string(e.relation), e.timestamp}));
    }
    json labels = json::array();
    for (auto l : ds.labels) labels.push_back(to_string(l));
    json interval = nullptr;
    if (ds.attack_interval) interval = json::array({ds.attack_interval->first, ds.attack_interval->second});
    return {{"version", kDatasetVersion},
            {"nodes", std::move(nodes)},
            {"events", std::move(events)},
            {"labels", std::move(labels)},
            {"attack_interval", std::move(interval)}};
}

LabeledDataset dataset_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("version")) throw FormatError("dataset: missing version field");
    if (!doc.at("version").is_number_integer() || doc.at("version").get<int>() != kDatasetVersion) {
        throw VersionError("dataset: unsupported version " + doc.at("version").dump() + " (expected " +
                           std::to_string(kDatasetVersion) + ")");
    }
    try {
        LabeledDataset ds;
        for (const auto& n : doc.at("nodes")) {
            auto kind = parse_node_kind(n.at("kind").get<std::string>());
            if (!kind) throw FormatError("dataset: bad node kind " + n.at("kind").dump());
            ds.graph.add_node({n.at("id").get<NodeId>(), *kind, n.at("label").get<std::string>()});
        }
        for (const auto& e : doc.at("events")) {
            auto rel = parse_relation(e.at(2).get<std::string>());
            if (!rel) throw FormatError("dataset: bad relation " + e.at(2).dump());
            ds.graph.append_event({e.at(0).get<NodeId>(), e.at(1).get<NodeId>(), *rel, e.at(3).get<Timestamp>()});
        }
        for (const auto& l : doc.at("labels")) {
            auto label = parse_truth_label(l.get<std::string>());
            if (!label) throw FormatError("dataset: bad label " + l.dump());
            ds.labels.push_back(*label);
        }
        if (ds.labels.size() != ds.graph.num_events()) {
            throw FormatError("dataset: label count does not match event count");
        }
        const auto& interval = doc.at("attack_interval");
        if (!interval.is_null()) {
            ds.attack_interval = std::pair{interval.at(0).get<Timestamp>(), interval.at(1).get<Timestamp>()};
        }
        return ds;
    } catch (const json::exception& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    } catch (const OrderingError& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    }
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw NotFoundError("cannot open " + path.string() + " for writing");
    out << dataset_to_json(ds).dump() << '\n';
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("dataset not found: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError("dataset " + path.string() + " is corrupt: " + e.what());
    }
    return dataset_from_json(doc);
}

} // namespace provlens
