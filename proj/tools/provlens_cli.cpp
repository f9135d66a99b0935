// provlens command-line front end.
//
// Exit codes: 0 success, 2 bad arguments or unreadable input, 3 resource
// limits, 1 anything else.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "provlens/error.hpp"
#include "provlens/eval.hpp"
#include "provlens/ingest.hpp"
#include "provlens/reporting.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace provlens;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitArgument = 2;
constexpr int kExitResource = 3;

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + " is not valid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw ResourceError("cannot write " + path.string());
}

RunConfig load_config(const std::string& path) {
    RunConfig rc = path.empty() ? RunConfig{} : load_run_config(path);
    apply_environment(rc.pipeline);
    return rc;
}

WindowStats calibrate_for(const TgnModel& model, const LabeledDataset& ds) {
    TrainingSplit split = default_split(ds);
    if (model.snapshot_time() && *model.snapshot_time() != split.train_end) {
        split.train_end = *model.snapshot_time();
        split.validation_end = std::max(split.validation_end, split.train_end + 1);
    }
    return calibrate(model, ds.graph, split);
}

struct AlertsFile {
    WindowStats stats;
    std::vector<Alert> alerts;
};

AlertsFile load_alerts(const fs::path& path) {
    const json doc = read_json(path);
    try {
        AlertsFile f;
        const json& s = doc.at("stats");
        f.stats = {s.at("mu").get<double>(), s.at("sigma").get<double>(), s.at("threshold").get<double>()};
        for (const auto& a : doc.at("alerts")) f.alerts.push_back(alert_from_json(a));
        return f;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<const Alert*> raised(const AlertsFile& f, std::optional<std::size_t> only) {
    std::vector<const Alert*> out;
    if (only) {
        if (*only >= f.alerts.size()) {
            throw ArgumentError("alert " + std::to_string(*only) + " does not exist; the file has " +
                                std::to_string(f.alerts.size()));
        }
        out.push_back(&f.alerts[*only]);
        return out;
    }
    for (const auto& a : f.alerts) {
        if (a.raised) out.push_back(&a);
    }
    return out;
}

AttackSubgraph merged_subgraph(const std::vector<const Alert*>& alerts, const TemporalGraph& graph) {
    AttackSubgraph out;
    std::map<std::size_t, Event> events;
    for (const Alert* a : alerts) {
        const AttackSubgraph s = reconstruct_subgraph(*a, graph);
        out.nodes.insert(s.nodes.begin(), s.nodes.end());
        for (std::size_t i = 0; i < s.events.size(); ++i) events.emplace(s.event_indexes[i], s.events[i]);
    }
    for (const auto& [i, e] : events) {
        out.event_indexes.push_back(i);
        out.events.push_back(e);
    }
    return out;
}

/// Stand-in subgraph built from the edges a report mentions, one edge per
/// canonical key, for re-rendering without the dataset.
AttackSubgraph subgraph_from_reports(std::span<const ExplanationReport> reports) {
    AttackSubgraph out;
    std::set<std::pair<Timestamp, EdgeKey>> seen;
    auto add = [&](const ExplanationReport& r, NodeId s, NodeId d, Relation rel) {
        if (!seen.insert({r.window.t0, EdgeKey{s, d, rel}}).second) return;
        out.nodes.insert(s);
        out.nodes.insert(d);
        out.event_indexes.push_back(out.events.size());
        out.events.push_back({s, d, rel, r.window.t0});
    };
    for (const auto& r : reports) {
        for (const auto& g : r.graphmask) add(r, g.src, g.dst, g.relation);
        for (const auto& b : r.nodes) {
            out.nodes.insert(b.node_id);
            for (const auto& g : b.gnn) {
                for (const auto& e : g.top_edges) add(r, e.src, e.dst, e.relation);
            }
            for (const auto& a : b.vatg_aggregate) add(r, a.src, a.dst, a.relation);
        }
    }
    return out;
}

std::vector<ExplanationReport> load_reports(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw NotFoundError("report directory not found: " + dir.string());
    std::vector<fs::path> files;
    const std::regex name(R"(explanations_.*\.json)");
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), name)) {
            files.push_back(entry.path());
        }
    }
    if (files.empty()) throw NotFoundError("no explanations_*.json files in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<ExplanationReport> reports;
    for (const auto& f : files) reports.push_back(report_from_json(read_json(f)));
    std::sort(reports.begin(), reports.end(),
              [](const ExplanationReport& a, const ExplanationReport& b) { return a.window < b.window; });
    return reports;
}

LabelMap labels_of(const LabeledDataset& ds) {
    LabelMap out;
    for (const auto& n : ds.graph.nodes()) out.emplace(n.node_id, n.label);
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Explainable provenance-graph intrusion detection"};
    app.require_subcommand(1);
    std::string config_path;
    bool verbose = false;
    app.add_option("-c,--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    // generate
    auto* gen = app.add_subcommand("generate", "Write a synthetic labelled scenario");
    std::uint64_t gen_seed = default_scenario_spec().seed;
    std::string gen_out, gen_log;
    gen->add_option("--seed", gen_seed, "Scenario seed");
    gen->add_option("-o,--out", gen_out, "Dataset JSON")->required();
    gen->add_option("--log", gen_log, "Also write the text log form");

    // train
    auto* tr = app.add_subcommand("train", "Train the detector model on the benign prefix");
    std::string tr_data, tr_out;
    tr->add_option("-d,--dataset", tr_data, "Dataset JSON")->required()->check(CLI::ExistingFile);
    tr->add_option("-o,--out", tr_out, "Checkpoint JSON")->required();

    // detect
    auto* dt = app.add_subcommand("detect", "Score windows and link alert queues");
    std::string dt_data, dt_model, dt_out;
    dt->add_option("-d,--dataset", dt_data, "Dataset JSON")->required()->check(CLI::ExistingFile);
    dt->add_option("-m,--model", dt_model, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    dt->add_option("-o,--out", dt_out, "Alerts JSON")->required();

    // explain
    auto* ex = app.add_subcommand("explain", "Explain raised alerts");
    std::string ex_data, ex_model, ex_alerts, ex_out;
    std::optional<std::size_t> ex_only;
    ex->add_option("-d,--dataset", ex_data, "Dataset JSON")->required()->check(CLI::ExistingFile);
    ex->add_option("-m,--model", ex_model, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    ex->add_option("-a,--alerts", ex_alerts, "Alerts JSON from detect")->required()->check(CLI::ExistingFile);
    ex->add_option("-o,--out-dir", ex_out, "Output directory")->required();
    ex->add_option("--alert", ex_only, "Explain only this alert (index into the file)");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Edge ablation table for an alert");
    std::string ab_data, ab_model, ab_alerts, ab_reports, ab_out;
    std::optional<std::size_t> ab_only;
    std::size_t ab_max = 0;
    ab->add_option("-d,--dataset", ab_data, "Dataset JSON")->required()->check(CLI::ExistingFile);
    ab->add_option("-m,--model", ab_model, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
    ab->add_option("-a,--alerts", ab_alerts, "Alerts JSON from detect")->required()->check(CLI::ExistingFile);
    ab->add_option("-r,--reports", ab_reports, "Directory with explanations_*.json")->required();
    ab->add_option("-o,--out", ab_out, "CSV output (default stdout)");
    ab->add_option("--alert", ab_only, "Alert index (default: first raised)");
    ab->add_option("--max-edges", ab_max, "Ablate only the N highest-weight edges (0 = all)");

    // report
    auto* rp = app.add_subcommand("report", "Re-render Markdown and graph files from report JSON");
    std::string rp_in, rp_out, rp_data, rp_alerts;
    rp->add_option("-i,--input", rp_in, "Directory with explanations_*.json")->required();
    rp->add_option("-o,--out-dir", rp_out, "Output directory (default: input)");
    rp->add_option("-d,--dataset", rp_data, "Dataset JSON, for full subgraphs and labels")->check(CLI::ExistingFile);
    rp->add_option("-a,--alerts", rp_alerts, "Alerts JSON, with --dataset")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitArgument;
    }
    spdlog::set_default_logger(spdlog::stderr_color_mt("provlens"));
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    const RunConfig rc = load_config(config_path);

    if (*gen) {
        ScenarioSpec spec = default_scenario_spec();
        spec.seed = gen_seed;
        const LabeledDataset ds = generate_scenario(spec);
        save_dataset(ds, gen_out);
        if (!gen_log.empty()) write_text(gen_log, render_log(ds));
        spdlog::info("wrote {} events over {} nodes to {}", ds.graph.num_events(), ds.graph.nodes().size(), gen_out);
    } else if (*tr) {
        const LabeledDataset ds = load_dataset(tr_data);
        const TrainedModel tm = train(ds, rc.model);
        save_checkpoint(tm.model, tr_out);
        spdlog::info("trained on {} samples, final mean loss {:.4f}; checkpoint {}", tm.report.num_samples,
                     tm.report.final_mean_loss, tr_out);
    } else if (*dt) {
        const LabeledDataset ds = load_dataset(dt_data);
        const TgnModel model = load_checkpoint(dt_model);
        const WindowStats stats = calibrate_for(model, ds);
        const DetectionResult det = detect(model, ds.graph, stats, rc.detector);
        json windows = json::array();
        for (const auto& v : det.verdicts) {
            windows.push_back({{"t0", v.window.t0},
                               {"t1", v.window.t1},
                               {"window", format_window(v.window)},
                               {"events", v.event_count},
                               {"flagged", v.high_loss_events.size()},
                               {"flagged_loss", v.flagged_loss},
                               {"suspicious_nodes", v.suspicious_nodes},
                               {"anomalous", v.anomalous}});
        }
        json alerts = json::array();
        std::size_t n_raised = 0;
        for (const auto& a : det.alerts) {
            alerts.push_back(to_json(a));
            if (a.raised) ++n_raised;
        }
        json doc = {{"stats", to_json(stats)},
                    {"detector", detector_config_to_json(rc.detector)},
                    {"windows", std::move(windows)},
                    {"alerts", std::move(alerts)}};
        write_text(dt_out, doc.dump(2) + "\n");
        spdlog::info("threshold {:.5f}; {} queues, {} raised; wrote {}", stats.threshold, det.alerts.size(), n_raised,
                     dt_out);
    } else if (*ex) {
        const LabeledDataset ds = load_dataset(ex_data);
        const TgnModel model = load_checkpoint(ex_model);
        const AlertsFile af = load_alerts(ex_alerts);
        const auto chosen = raised(af, ex_only);
        if (chosen.empty()) {
            spdlog::warn("no raised alerts in {}; nothing to explain", ex_alerts);
            write_text(fs::path(ex_out) / "summary.md", emit_markdown({}));
            return kExitOk;
        }
        ContextCache cache(rc.pipeline.memory_budget);
        std::vector<ExplanationReport> reports;
        for (const Alert* a : chosen) {
            PipelineResult res = run_pipeline(model, ds.graph, *a, af.stats, rc.pipeline, &cache);
            for (const auto& w : res.warnings) spdlog::warn("{}", w);
            for (auto& r : res.reports) reports.push_back(std::move(r));
        }
        const AttackSubgraph sub = merged_subgraph(chosen, ds.graph);
        const auto rare = unseen_edges(ds.graph, model.snapshot_time().value_or(0), reports);
        const auto written = write_bundle(make_bundle(reports, sub, labels_of(ds), rare), ex_out);
        spdlog::info("explained {} windows; wrote {} files to {}", reports.size(), written.size(), ex_out);
    } else if (*ab) {
        const LabeledDataset ds = load_dataset(ab_data);
        const TgnModel model = load_checkpoint(ab_model);
        const AlertsFile af = load_alerts(ab_alerts);
        const auto chosen = raised(af, ab_only);
        if (chosen.empty()) throw ArgumentError("no raised alert to ablate");
        const Alert& alert = *chosen.front();
        std::vector<ExplanationReport> reports;
        for (auto& r : load_reports(ab_reports)) {
            if (std::find(alert.windows.begin(), alert.windows.end(), r.window) != alert.windows.end()) {
                reports.push_back(std::move(r));
            }
        }
        if (reports.empty()) throw ArgumentError("no report in " + ab_reports + " covers the chosen alert");
        const auto rows = ablation_table(model, ds.graph, alert, af.stats, rc.detector, reports, ab_max);
        const std::string csv = ablation_csv(rows);
        if (ab_out.empty()) {
            std::cout << csv;
        } else {
            write_text(ab_out, csv);
            spdlog::info("wrote {} ablation rows to {}", rows.size(), ab_out);
        }
    } else if (*rp) {
        const auto reports = load_reports(rp_in);
        const fs::path out = rp_out.empty() ? fs::path(rp_in) : fs::path(rp_out);
        LabelMap labels;
        AttackSubgraph sub;
        if (!rp_data.empty() && !rp_alerts.empty()) {
            const LabeledDataset ds = load_dataset(rp_data);
            labels = labels_of(ds);
            const AlertsFile af = load_alerts(rp_alerts);
            sub = merged_subgraph(raised(af, std::nullopt), ds.graph);
        } else {
            if (!rp_data.empty() || !rp_alerts.empty()) {
                throw ArgumentError("--dataset and --alerts must be given together");
            }
            sub = subgraph_from_reports(reports);
        }
        ReportBundle bundle = make_bundle(reports, sub, labels);
        bundle.json_documents.clear();
        const auto written = write_bundle(bundle, out);
        spdlog::info("rendered {} files to {}", written.size(), out.string());
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ResourceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitResource;
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const VersionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgument;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOther;
    }
}
