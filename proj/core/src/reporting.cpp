#include "provlens/reporting.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "provlens/error.hpp"

namespace provlens {

using json = nlohmann::json;

ImportanceBand band_of(double v) {
    if (v > 0.7) return ImportanceBand::Critical;
    if (v >= 0.3) return ImportanceBand::Moderate;
    return ImportanceBand::Irrelevant;
}

std::string_view to_string(ImportanceBand b) {
    switch (b) {
    case ImportanceBand::Critical: return "critical";
    case ImportanceBand::Moderate: return "moderate";
    case ImportanceBand::Irrelevant: return "irrelevant";
    }
    return "irrelevant";
}

// ---------------------------------------------------------------------------
// Window strings

namespace {

constexpr Timestamp kSecondsPerDay = 86'400;

std::tm utc(Timestamp ns) {
    Timestamp s = ns / kNanosPerSecond;
    if (ns % kNanosPerSecond != 0 && ns < 0) --s;
    const std::time_t t = static_cast<std::time_t>(s);
    std::tm out{};
    gmtime_r(&t, &out);
    return out;
}

std::string strftime_utc(Timestamp ns, const char* fmt) {
    const std::tm tm = utc(ns);
    char buf[64];
    const std::size_t n = std::strftime(buf, sizeof buf, fmt, &tm);
    return std::string(buf, n);
}

} // namespace

std::string format_window(TimeWindow w) {
    return strftime_utc(w.t0, "%Y-%m-%dT%H:%M:%S") + "-" + strftime_utc(w.t1, "%H:%M:%S");
}

std::string window_file_stem(TimeWindow w) {
    return strftime_utc(w.t0, "%Y%m%dT%H%M%S") + "-" + strftime_utc(w.t1, "%H%M%S");
}

TimeWindow parse_window(std::string_view text) {
    int y = 0, mo = 0, d = 0, h0 = 0, m0 = 0, s0 = 0, h1 = 0, m1 = 0, s1 = 0;
    int used = 0;
    const std::string s(text);
    if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d-%2d:%2d:%2d%n", &y, &mo, &d, &h0, &m0, &s0, &h1, &m1, &s1,
                    &used) != 9 ||
        static_cast<std::size_t>(used) != s.size() || s.size() != 28) {
        throw FormatError("window must look like YYYY-MM-DDTHH:MM:SS-HH:MM:SS, got '" + s + "'");
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h0 > 23 || m0 > 59 || s0 > 59 || h1 > 23 || m1 > 59 || s1 > 59) {
        throw FormatError("window has an out-of-range field: '" + s + "'");
    }
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h0;
    tm.tm_min = m0;
    tm.tm_sec = s0;
    const Timestamp start = static_cast<Timestamp>(timegm(&tm));
    const Timestamp day = start - (h0 * 3600 + m0 * 60 + s0);
    Timestamp end = day + h1 * 3600 + m1 * 60 + s1;
    if (end <= start) end += kSecondsPerDay;
    return {start * kNanosPerSecond, end * kNanosPerSecond};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json short_edge(const ReportEdge& e) {
    return {{"src", e.src}, {"dst", e.dst}, {"rel", report_name(e.relation)}, {"imp", e.value}};
}

Relation relation_field(const json& j, const char* key) {
    const auto name = j.at(key).get<std::string>();
    const auto rel = parse_report_relation(name);
    if (!rel) throw FormatError("unknown relation '" + name + "'");
    return *rel;
}

ReportEdge short_edge_from(const json& j) {
    return {j.at("src").get<NodeId>(), j.at("dst").get<NodeId>(), relation_field(j, "rel"), j.at("imp").get<double>()};
}

} // namespace

json emit_json(const ExplanationReport& r) {
    json aggregate = json::array();
    for (const auto& g : r.graphmask) {
        aggregate.push_back({{"src", g.src},
                             {"dst", g.dst},
                             {"relation", report_name(g.relation)},
                             {"weight", g.weight},
                             {"count", g.count}});
    }
    json nodes = json::array();
    for (const auto& b : r.nodes) {
        json gnn = json::array();
        for (const auto& g : b.gnn) {
            json top = json::array();
            for (const auto& e : g.top_edges) top.push_back(short_edge(e));
            gnn.push_back({{"event_index", g.event_index},
                           {"comprehensiveness", g.comprehensiveness},
                           {"sufficiency", g.sufficiency},
                           {"top_edges", std::move(top)}});
        }
        json events = json::array();
        for (const auto& v : b.vatg_events) {
            json edges = json::array();
            for (const auto& e : v.edges) edges.push_back(short_edge(e));
            events.push_back({{"event_index", v.event_index}, {"edges", std::move(edges)}});
        }
        json agg = json::array();
        for (const auto& a : b.vatg_aggregate) {
            agg.push_back({{"src", a.src}, {"dst", a.dst}, {"rel", report_name(a.relation)}, {"mean", a.mean}, {"var", a.var}});
        }
        nodes.push_back({{"node_id", b.node_id},
                         {"score", b.score},
                         {"gnn", std::move(gnn)},
                         {"va_tg", {{"events", std::move(events)}, {"aggregate", std::move(agg)}}}});
    }
    json labels = json::object();
    for (const auto& [id, label] : r.labels) labels[std::to_string(id)] = label;
    json skipped = json::array();
    for (const auto& s : r.skipped) {
        skipped.push_back({{"event_index", s.event_index}, {"method", s.method}, {"reason", s.reason}});
    }
    return {{"window", format_window(r.window)},
            {"num_events", r.num_events},
            {"threshold", r.threshold},
            {"graphmask", {{"aggregate", std::move(aggregate)}}},
            {"nodes", std::move(nodes)},
            {"labels", std::move(labels)},
            {"skipped", std::move(skipped)}};
}

ExplanationReport report_from_json(const json& doc) {
    try {
        ExplanationReport r;
        r.window = parse_window(doc.at("window").get<std::string>());
        r.num_events = doc.at("num_events").get<std::size_t>();
        r.threshold = doc.at("threshold").get<double>();
        for (const auto& g : doc.at("graphmask").at("aggregate")) {
            r.graphmask.push_back({g.at("src").get<NodeId>(), g.at("dst").get<NodeId>(), relation_field(g, "relation"),
                                   g.at("weight").get<double>(), g.at("count").get<std::size_t>()});
        }
        for (const auto& n : doc.at("nodes")) {
            NodeBlock b;
            b.node_id = n.at("node_id").get<NodeId>();
            b.score = n.at("score").get<double>();
            for (const auto& g : n.at("gnn")) {
                GnnRecord rec{g.at("event_index").get<std::size_t>(), g.at("comprehensiveness").get<double>(),
                              g.at("sufficiency").get<double>(), {}};
                for (const auto& e : g.at("top_edges")) rec.top_edges.push_back(short_edge_from(e));
                b.gnn.push_back(std::move(rec));
            }
            const json& va = n.at("va_tg");
            for (const auto& v : va.at("events")) {
                VatgEventRecord rec{v.at("event_index").get<std::size_t>(), {}};
                for (const auto& e : v.at("edges")) rec.edges.push_back(short_edge_from(e));
                b.vatg_events.push_back(std::move(rec));
            }
            for (const auto& a : va.at("aggregate")) {
                b.vatg_aggregate.push_back({a.at("src").get<NodeId>(), a.at("dst").get<NodeId>(), relation_field(a, "rel"),
                                            a.at("mean").get<double>(), a.at("var").get<double>()});
            }
            r.nodes.push_back(std::move(b));
        }
        if (doc.contains("labels")) {
            for (const auto& [key, label] : doc.at("labels").items()) {
                std::size_t used = 0;
                const NodeId id = std::stoll(key, &used);
                if (used != key.size()) throw FormatError("label key '" + key + "' is not a node id");
                r.labels.emplace(id, label.get<std::string>());
            }
        }
        if (doc.contains("skipped")) {
            for (const auto& s : doc.at("skipped")) {
                r.skipped.push_back({s.at("event_index").get<std::size_t>(), s.at("method").get<std::string>(),
                                     s.at("reason").get<std::string>()});
            }
        }
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("explanation report: ") + e.what());
    } catch (const std::logic_error& e) {
        throw FormatError(std::string("explanation report: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Markdown

std::set<EdgeKey> unseen_edges(const TemporalGraph& graph, Timestamp before,
                               std::span<const ExplanationReport> reports) {
    std::set<EdgeKey> mentioned;
    for (const auto& r : reports) {
        for (const auto& g : r.graphmask) mentioned.insert({g.src, g.dst, g.relation});
        for (const auto& b : r.nodes) {
            for (const auto& g : b.gnn) {
                for (const auto& e : g.top_edges) mentioned.insert({e.src, e.dst, e.relation});
            }
            for (const auto& a : b.vatg_aggregate) mentioned.insert({a.src, a.dst, a.relation});
        }
    }
    for (const Event& e : graph.events()) {
        if (e.timestamp >= before) break;
        mentioned.erase(key_of(e));
        if (mentioned.empty()) break;
    }
    return mentioned;
}

namespace {

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string general(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

class Namer {
public:
    Namer(const LabelMap& primary, const LabelMap& fallback) : primary_(primary), fallback_(fallback) {}

    std::string operator()(NodeId id) {
        if (auto it = primary_.find(id); it != primary_.end()) return it->second;
        if (auto it = fallback_.find(id); it != fallback_.end()) return it->second;
        missing_.insert(id);
        return std::to_string(id);
    }
    const std::set<NodeId>& missing() const { return missing_; }

private:
    const LabelMap& primary_;
    const LabelMap& fallback_;
    std::set<NodeId> missing_;
};

std::string rationale(ImportanceBand band, bool rare) {
    std::string out(to_string(band));
    switch (band) {
    case ImportanceBand::Critical: out += ": critical to the alert"; break;
    case ImportanceBand::Moderate: out += ": contributes to the alert"; break;
    case ImportanceBand::Irrelevant: out += ": little influence on the alert"; break;
    }
    if (rare) out += "; rare event, never observed before the detector's snapshot";
    return out;
}

std::string edge_bullet(Namer& name, NodeId src, NodeId dst, Relation rel, double value, const std::string& detail,
                        const std::set<EdgeKey>& rare) {
    return "- Edge (" + name(src) + " → " + name(dst) + ", " + std::string(report_name(rel)) + ") — " +
           rationale(band_of(value), rare.contains({src, dst, rel})) + " (" + detail + ")\n";
}

} // namespace

std::string emit_markdown(std::span<const ExplanationReport> reports, const LabelMap& labels,
                          const std::set<EdgeKey>& rare) {
    std::ostringstream out;
    out << "# Explanation summary\n\n";
    if (reports.empty()) out << "No alert windows were explained.\n";
    for (std::size_t w = 0; w < reports.size(); ++w) {
        const ExplanationReport& r = reports[w];
        Namer name(labels, r.labels);
        std::ostringstream body;
        body << "## Window " << w << ": " << format_window(r.window) << "\n\n";
        body << "- Events in window: " << r.num_events << "\n";
        body << "- Loss threshold: " << general(r.threshold) << " nats\n";
        body << "- Explained nodes: " << r.nodes.size() << "\n";
        if (!r.skipped.empty()) body << "- Skipped explanations: " << r.skipped.size() << "\n";
        body << "\n";

        body << "### GraphMask window aggregate\n\n";
        if (r.graphmask.empty()) body << "No masked events in this window.\n";
        for (const auto& g : r.graphmask) {
            body << edge_bullet(name, g.src, g.dst, g.relation, g.weight,
                                "weight " + fixed(g.weight) + " over " + std::to_string(g.count) + " events", rare);
        }
        body << "\n";

        if (r.nodes.empty()) {
            body << "No explainable nodes in this window.\n\n";
        }
        for (const auto& b : r.nodes) {
            body << "### Node " << name(b.node_id) << " (id " << b.node_id << "), score " << general(b.score)
                 << "\n\n";
            for (const auto& g : b.gnn) {
                body << "GNNExplainer, event " << g.event_index << " (comprehensiveness " << fixed(g.comprehensiveness)
                     << ", sufficiency " << fixed(g.sufficiency) << "):\n\n";
                for (const auto& e : g.top_edges) {
                    body << edge_bullet(name, e.src, e.dst, e.relation, e.value, "importance " + fixed(e.value), rare);
                }
                body << "\n";
            }
            if (!b.vatg_aggregate.empty()) {
                body << "VA-TG aggregate over " << b.vatg_events.size() << " events:\n\n";
                for (const auto& a : b.vatg_aggregate) {
                    body << edge_bullet(name, a.src, a.dst, a.relation, a.mean,
                                        "mean " + fixed(a.mean) + ", variance " + fixed(a.var, 4), rare);
                }
                body << "\n";
            }
        }
        for (NodeId id : name.missing()) body << "> warning: no label for node " << id << "; showing its id\n";
        if (!name.missing().empty()) body << "\n";
        out << body.str();
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Graph description

namespace {

std::string dot_string(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + '"';
}

const char* edge_style(ImportanceBand b) {
    switch (b) {
    case ImportanceBand::Critical: return "color=red, penwidth=3";
    case ImportanceBand::Moderate: return "color=orange, penwidth=2";
    case ImportanceBand::Irrelevant: return "color=gray, penwidth=1";
    }
    return "color=gray, penwidth=1";
}

std::map<EdgeKey, double> edge_importance(const ExplanationReport& r) {
    std::map<EdgeKey, double> imp;
    auto bump = [&](NodeId s, NodeId d, Relation rel, double v) {
        auto [it, fresh] = imp.try_emplace({s, d, rel}, v);
        if (!fresh) it->second = std::max(it->second, v);
    };
    for (const auto& g : r.graphmask) bump(g.src, g.dst, g.relation, g.weight);
    for (const auto& b : r.nodes) {
        for (const auto& g : b.gnn) {
            for (const auto& e : g.top_edges) bump(e.src, e.dst, e.relation, e.value);
        }
        for (const auto& a : b.vatg_aggregate) bump(a.src, a.dst, a.relation, a.mean);
    }
    return imp;
}

} // namespace

std::string emit_graph_description(const ExplanationReport& r, const AttackSubgraph& subgraph, const LabelMap& labels) {
    const auto imp = edge_importance(r);
    Namer name(labels, r.labels);

    std::vector<std::pair<std::size_t, const Event*>> events;
    std::set<NodeId> nodes = subgraph.nodes;
    for (std::size_t i = 0; i < subgraph.events.size(); ++i) {
        const Event& e = subgraph.events[i];
        if (!r.window.contains(e.timestamp)) continue;
        const std::size_t index = i < subgraph.event_indexes.size() ? subgraph.event_indexes[i] : i;
        events.emplace_back(index, &e);
        nodes.insert(e.src);
        nodes.insert(e.dst);
    }
    std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    std::ostringstream out;
    out << "digraph " << dot_string(format_window(r.window)) << " {\n";
    out << "  rankdir=LR;\n";
    for (NodeId id : nodes) out << "  n" << id << " [label=" << dot_string(name(id)) << "];\n";
    for (const auto& [index, e] : events) {
        const auto it = imp.find(key_of(*e));
        const double v = it == imp.end() ? 0.0 : it->second;
        out << "  n" << e->src << " -> n" << e->dst << " [label=" << dot_string(std::string(report_name(e->relation)) + " " + fixed(v))
            << ", " << edge_style(band_of(v)) << ", tooltip=" << dot_string("event " + std::to_string(index)) << "];\n";
    }
    out << "}\n";
    return out.str();
}

ReportBundle make_bundle(std::span<const ExplanationReport> reports, const AttackSubgraph& subgraph,
                         const LabelMap& labels, const std::set<EdgeKey>& rare) {
    ReportBundle b;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        b.json_documents.emplace_back("explanations_" + window_file_stem(reports[i].window) + ".json",
                                      emit_json(reports[i]));
        b.graph_descriptions.emplace_back("window_" + std::to_string(i) + ".gv",
                                          emit_graph_description(reports[i], subgraph, labels));
    }
    b.markdown = emit_markdown(reports, labels, rare);
    return b;
}

std::vector<std::filesystem::path> write_bundle(const ReportBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto put = [&](const std::string& name, const std::string& text) {
        const auto path = dir / name;
        std::ofstream out(path, std::ios::binary);
        out << text;
        if (!out) throw ResourceError("cannot write " + path.string());
        written.push_back(path);
    };
    for (const auto& [name, doc] : bundle.json_documents) put(name, doc.dump(2) + "\n");
    put("summary.md", bundle.markdown);
    for (const auto& [name, text] : bundle.graph_descriptions) put(name, text);
    return written;
}

} // namespace provlens
