// texmax command-line front end. Exit codes: 0 ok, 2 usage/config, 3 data/format, 4 numeric.

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "texmax/backbone.hpp"
#include "texmax/binary_io.hpp"
#include "texmax/cloud.hpp"
#include "texmax/dataset.hpp"
#include "texmax/descriptor.hpp"
#include "texmax/error.hpp"
#include "texmax/gradcheck_suite.hpp"
#include "texmax/heads.hpp"
#include "texmax/inversion.hpp"
#include "texmax/ppm.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace texmax;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void apply_thread_cap() {
    const char* env = std::getenv("TEXMAX_THREADS");
    if (!env || !*env) return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError("TEXMAX_THREADS must be a positive integer, got \"" + std::string(env) + "\"");
    omp_set_num_threads(static_cast<int>(n));
}

json read_json(const fs::path& path) {
    const Bytes bytes = read_file(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what(), e.byte);
    }
}

void write_json(const json& j, const std::string& out) {
    const std::string text = j.dump(2) + "\n";
    if (out.empty() || out == "-")
        std::cout << text;
    else
        write_file_atomic(out, text);
}

std::vector<TextureDescriptor> describe_all(const DatasetManifest& m, const BackboneSpec& net,
                                            const DescriptorOptions& opt) {
    std::vector<TextureDescriptor> out;
    out.reserve(m.records.size());
    for (const LabelRecord& r : m.records) out.push_back(describe_image(read_ppm(m.root / r.path), net, opt));
    return out;
}

std::vector<std::size_t> labels_of(const DatasetManifest& m, const std::vector<std::string>& classes) {
    std::vector<std::size_t> labels;
    for (const LabelRecord& r : m.records) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), r.label);
        labels.push_back(static_cast<std::size_t>(it - classes.begin()));
    }
    return labels;
}

std::vector<std::vector<std::string>> phrase_sets_of(const DatasetManifest& m) {
    std::vector<std::vector<std::string>> sets;
    for (const LabelRecord& r : m.records) sets.push_back(m.phrases_for(r.path));
    return sets;
}

json accuracy_json(const Accuracy& acc) {
    return json{{"per_tap", acc.per_tap}, {"ensemble", acc.ensemble}};
}

std::pair<int, int> parse_canvas(const std::string& s) {
    int w = 0, h = 0;
    char x = 0, extra = 0;
    std::istringstream in(s);
    if (!(in >> w >> x >> h) || (x != 'x' && x != 'X') || (in >> extra))
        throw ConfigError("--canvas expects WIDTHxHEIGHT, got \"" + s + "\"");
    return {w, h};
}

std::vector<PhraseScore> scores_from_json(const json& j, const fs::path& path) {
    const json& list = j.is_object() && j.contains("phrases") ? j.at("phrases") : j;
    if (!list.is_array()) throw FormatError(path.string() + ": expected an array of {phrase, probability}", 0);
    std::vector<PhraseScore> scores;
    for (const json& e : list) {
        if (!e.is_object() || !e.contains("phrase") || !e.contains("probability") || !e["phrase"].is_string() ||
            !e["probability"].is_number())
            throw FormatError(path.string() + ": score entries need a string \"phrase\" and numeric \"probability\"", 0);
        scores.push_back({e["phrase"].get<std::string>(), e["probability"].get<double>()});
    }
    return scores;
}

TextureDescriptor descriptor_from_json(const json& j, const fs::path& path) {
    TextureDescriptor d;
    try {
        d.channels = j.at("channels").get<std::vector<std::size_t>>();
        d.taps = j.at("taps").get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": descriptor JSON needs \"channels\" and \"taps\": " + e.what(), 0);
    }
    if (d.channels.size() != d.taps.size()) throw FormatError(path.string() + ": channels/taps length mismatch", 0);
    for (std::size_t t = 0; t < d.taps.size(); ++t) {
        if (d.taps[t].size() != d.channels[t] * d.channels[t])
            throw FormatError(path.string() + ": tap " + std::to_string(t) + " has the wrong length", 0);
        d.zero.push_back(std::all_of(d.taps[t].begin(), d.taps[t].end(), [](double v) { return v == 0.0; }));
    }
    return d;
}

json descriptor_to_json(const TextureDescriptor& d) { return json{{"channels", d.channels}, {"taps", d.taps}}; }

// ---- subcommands ----

struct MakeBackboneArgs {
    std::string kind = "gabor";
    std::uint64_t seed = 0;
    std::string out;
};

int run_make_backbone(const MakeBackboneArgs& a) {
    const FilterBankKind kind = a.kind == "gabor" ? FilterBankKind::gabor : FilterBankKind::random_orthogonal;
    const BackboneSpec spec = make_filter_bank(kind, BackboneShape{}, a.seed);
    save_backbone(spec, a.out);
    std::cout << "wrote " << a.out << " (" << spec.layers.size() << " layers, " << spec.tap_count() << " taps)\n";
    return 0;
}

struct MakeSyntheticArgs {
    std::string kind_set = "stripes_h,stripes_v,checker,dots";
    std::size_t count = 125;
    std::size_t size = 64;
    double noise = 0.05;
    std::uint64_t seed = 0;
    std::string out;
};

int run_make_synthetic(const MakeSyntheticArgs& a) {
    SyntheticOptions opt;
    opt.kinds.clear();
    std::stringstream ss(a.kind_set);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) opt.kinds.push_back(parse_kind(item));
    opt.count = a.count;
    opt.size = a.size;
    opt.noise = a.noise;
    opt.seed = a.seed;
    const DatasetManifest m = make_synthetic(opt, a.out);
    std::cout << "wrote " << m.records.size() << " images in " << m.classes.size() << " classes to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string data, backbone, out;
    std::size_t per_class = kDefaultPerClass;
    std::size_t top_classes = kDefaultTopClasses;
    double test_fraction = 0.2;
    TrainConfig cfg;
    bool centered = false;
};

int run_train(const TrainArgs& a) {
    validate(a.cfg);
    const fs::path root = a.data;
    const fs::path phrases_csv = root / "phrases.csv";
    const DatasetManifest all = load_manifest(
        root / "labels.csv", fs::exists(phrases_csv) ? std::optional<fs::path>(phrases_csv) : std::nullopt, root);
    const DatasetManifest picked = subsample(all, a.per_class, a.top_classes, a.cfg.seed);
    auto [train, test] = split_train_test(picked, a.test_fraction, a.cfg.seed);

    const BackboneSpec net = load_backbone(a.backbone);
    const DescriptorOptions dopt{a.centered};
    const auto train_desc = describe_all(train, net, dopt);
    const auto test_desc = describe_all(test, net, dopt);
    const auto& classes = picked.classes;
    const auto train_labels = labels_of(train, classes);
    const auto test_labels = labels_of(test, classes);

    const SoftmaxTraining fit = train_softmax(train_desc, train_labels, classes, a.cfg);
    fs::create_directories(a.out);
    save_softmax_head(fit.head, fs::path(a.out) / "heads.txhd");

    json report;
    report["classes"] = classes;
    report["train_images"] = train.records.size();
    report["test_images"] = test.records.size();
    report["descriptor"] = a.centered ? "centered" : "uncentered";
    json cfg;
    cfg["learning_rate"] = a.cfg.learning_rate;
    cfg["epochs"] = a.cfg.epochs;
    cfg["batch_size"] = a.cfg.batch_size;
    cfg["weight_decay"] = a.cfg.weight_decay;
    cfg["seed"] = a.cfg.seed;
    report["config"] = cfg;
    json final_loss = json::array();
    for (const auto& trace : fit.loss_trace) final_loss.push_back(trace.empty() ? 0.0 : trace.back());
    report["final_train_loss"] = final_loss;
    report["train_accuracy"] = accuracy_json(evaluate(fit.head, train_desc, train_labels));
    report["test_accuracy"] = test.records.empty() ? json(nullptr) : accuracy_json(evaluate(fit.head, test_desc, test_labels));

    if (!picked.phrases.empty()) {
        const PhraseTraining phrases = train_phrases(train_desc, phrase_sets_of(train), a.cfg);
        save_phrase_model(phrases.model, fs::path(a.out) / "phrases.txhd");
        report["phrases"] = phrases.model.lexicon;
        report["phrase_test_map"] = test.records.empty()
                                        ? json(nullptr)
                                        : json(mean_average_precision(phrases.model, test_desc, phrase_sets_of(test)));
    }
    write_json(report, (fs::path(a.out) / "report.json").string());
    std::cout << report["test_accuracy"].dump() << "\n";
    return 0;
}

struct InvertArgs {
    std::string heads, backbone, class_name, out, trace;
    InversionConfig cfg;
    std::string init = "noise";
    bool centered = false;
};

int run_invert(const InvertArgs& a) {
    const SoftmaxHead head = load_softmax_head(a.heads);
    const BackboneSpec net = load_backbone(a.backbone);
    InversionConfig cfg = a.cfg;
    const auto it = std::find(head.class_names.begin(), head.class_names.end(), a.class_name);
    if (it == head.class_names.end()) throw ConfigError("unknown class \"" + a.class_name + "\" in " + a.heads);
    cfg.target_class = static_cast<std::size_t>(it - head.class_names.begin());
    cfg.init = a.init == "gray" ? InitKind::mid_gray : InitKind::uniform_noise;
    cfg.descriptor.centered = a.centered;

    const InversionResult r = synthesize_maximal_image(cfg, head, net);
    fs::path trace = a.trace;
    if (trace.empty()) trace = fs::path(a.out).replace_extension(".trace.csv");
    write_ppm(r.image, a.out);
    write_file_atomic(trace, trace_csv(r.trace));

    json summary;
    summary["class"] = a.class_name;
    summary["iterations"] = r.trace.records.empty() ? 0 : r.trace.records.back().iteration;
    summary["objective"] = r.trace.records.empty() ? 0.0 : r.trace.records.back().objective;
    summary["tap_target_probability"] = r.tap_target_probability;
    summary["tv"] = tv_norm(r.image, cfg.tv_beta).value;
    summary["oriented_energy_ratio"] = oriented_energy_ratio(r.image);
    summary["converged"] = r.trace.converged;
    std::cout << summary.dump() << "\n";
    return 0;
}

struct DescribeArgs {
    std::string model, backbone, image, descriptor, out, save_descriptor;
    std::size_t k = kDefaultTopPhrases;
    bool centered = false;
};

int run_describe(const DescribeArgs& a) {
    const PhraseModel model = load_phrase_model(a.model);
    TextureDescriptor desc;
    if (!a.image.empty()) {
        if (a.backbone.empty()) throw ConfigError("--image requires --backbone");
        desc = describe_image(read_ppm(a.image), load_backbone(a.backbone), DescriptorOptions{a.centered});
        if (!a.save_descriptor.empty()) write_json(descriptor_to_json(desc), a.save_descriptor);
    } else {
        desc = descriptor_from_json(read_json(a.descriptor), a.descriptor);
    }
    if (desc.channels != model.tap_channels) throw ConfigError("descriptor shape does not match the phrase model");
    auto scores = score_phrases(desc, model);
    if (scores.size() > a.k) scores.resize(a.k);
    json list = json::array();
    for (const PhraseScore& s : scores) list.push_back(json{{"phrase", s.phrase}, {"probability", s.probability}});
    write_json(json{{"k", a.k}, {"phrases", list}}, a.out);
    return 0;
}

struct CloudArgs {
    std::string scores, canvas = "480x320", out, layout;
    std::size_t k = kDefaultTopPhrases;
    std::uint64_t seed = 0;
};

int run_cloud(const CloudArgs& a) {
    const auto [w, h] = parse_canvas(a.canvas);
    const auto scores = scores_from_json(read_json(a.scores), a.scores);
    const PhraseCloudLayout layout = layout_cloud(scores, a.k, w, h, a.seed);
    write_ppm(render_cloud(layout), a.out);
    if (!a.layout.empty()) write_file_atomic(a.layout, layout_json(layout));
    std::cout << "placed " << layout.items.size() << " phrases, dropped " << layout.dropped.size() << "\n";
    return 0;
}

struct GradcheckArgs {
    std::uint64_t seed = 0;
    std::size_t seeds = 10;
};

int run_gradcheck(const GradcheckArgs& a) {
    const auto rows = run_gradcheck_suite(a.seed, a.seeds);
    bool ok = true;
    std::printf("%-22s %14s %8s %8s  %s\n", "op", "max_rel_err", "checked", "skipped", "status");
    for (const GradcheckRow& r : rows) {
        std::printf("%-22s %14.3e %8zu %8zu  %s\n", r.op.c_str(), r.max_relative_error, r.checked, r.skipped,
                    r.passed() ? "ok" : "FAIL");
        ok = ok && r.passed();
    }
    return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"texmax: texture maximal-image synthesis and phrase description"};
    app.require_subcommand(1);

    MakeBackboneArgs mb;
    auto* c_mb = app.add_subcommand("make-backbone", "write a fixed filter-bank backbone (TXBB)");
    c_mb->add_option("--kind", mb.kind, "filter bank")->check(CLI::IsMember({"gabor", "random_orthogonal"}))->capture_default_str();
    c_mb->add_option("--seed", mb.seed)->capture_default_str();
    c_mb->add_option("--out", mb.out, "output .txbb path")->required();

    MakeSyntheticArgs ms;
    auto* c_ms = app.add_subcommand("make-synthetic", "generate the procedural texture dataset");
    c_ms->add_option("--kind-set", ms.kind_set, "comma-separated kinds")->capture_default_str();
    c_ms->add_option("--count", ms.count, "images per class")->check(CLI::PositiveNumber)->capture_default_str();
    c_ms->add_option("--size", ms.size)->check(CLI::Range(16, 4096))->capture_default_str();
    c_ms->add_option("--noise", ms.noise, "Gaussian pixel noise sigma")->check(CLI::NonNegativeNumber)->capture_default_str();
    c_ms->add_option("--seed", ms.seed)->capture_default_str();
    c_ms->add_option("--out", ms.out, "dataset directory")->required();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "train per-tap softmax heads and phrase classifiers");
    c_tr->add_option("--data", tr.data, "dataset directory with labels.csv [phrases.csv]")->required()->check(CLI::ExistingDirectory);
    c_tr->add_option("--backbone", tr.backbone)->required()->check(CLI::ExistingFile);
    c_tr->add_option("--out", tr.out, "output directory")->required();
    c_tr->add_option("--per-class", tr.per_class)->check(CLI::PositiveNumber)->capture_default_str();
    c_tr->add_option("--top-classes", tr.top_classes)->check(CLI::PositiveNumber)->capture_default_str();
    c_tr->add_option("--test-fraction", tr.test_fraction)->capture_default_str();
    c_tr->add_option("--lr", tr.cfg.learning_rate)->capture_default_str();
    c_tr->add_option("--epochs", tr.cfg.epochs)->capture_default_str();
    c_tr->add_option("--batch", tr.cfg.batch_size)->capture_default_str();
    c_tr->add_option("--weight-decay", tr.cfg.weight_decay)->capture_default_str();
    c_tr->add_option("--seed", tr.cfg.seed)->capture_default_str();
    c_tr->add_flag("--centered", tr.centered, "mean-centred second-order pooling");

    InvertArgs iv;
    auto* c_iv = app.add_subcommand("invert", "synthesize the maximal image of a class");
    c_iv->add_option("--heads", iv.heads)->required()->check(CLI::ExistingFile);
    c_iv->add_option("--backbone", iv.backbone)->required()->check(CLI::ExistingFile);
    c_iv->add_option("--class", iv.class_name)->required();
    c_iv->add_option("--gamma", iv.cfg.gamma)->capture_default_str();
    c_iv->add_option("--beta", iv.cfg.tv_beta)->capture_default_str();
    c_iv->add_option("--iters", iv.cfg.max_iters)->capture_default_str();
    c_iv->add_option("--size", iv.cfg.size)->capture_default_str();
    c_iv->add_option("--seed", iv.cfg.seed)->capture_default_str();
    c_iv->add_option("--step", iv.cfg.step_size, "initial line-search step")->capture_default_str();
    c_iv->add_option("--ftol", iv.cfg.ftol)->capture_default_str();
    c_iv->add_option("--init", iv.init)->check(CLI::IsMember({"noise", "gray"}))->capture_default_str();
    c_iv->add_flag("--centered", iv.centered);
    c_iv->add_option("--out", iv.out, "output PPM")->required();
    c_iv->add_option("--trace", iv.trace, "trace CSV (default: the output path with extension .trace.csv)");

    DescribeArgs ds;
    auto* c_ds = app.add_subcommand("describe", "rank attribute phrases for an image or descriptor");
    c_ds->add_option("--phrases-model", ds.model)->required()->check(CLI::ExistingFile);
    c_ds->add_option("--backbone", ds.backbone)->check(CLI::ExistingFile);
    auto* o_img = c_ds->add_option("--image", ds.image, "PPM image")->check(CLI::ExistingFile);
    auto* o_desc = c_ds->add_option("--descriptor", ds.descriptor, "descriptor JSON")->check(CLI::ExistingFile);
    o_img->excludes(o_desc);
    c_ds->add_option("--k", ds.k)->check(CLI::PositiveNumber)->capture_default_str();
    c_ds->add_flag("--centered", ds.centered);
    c_ds->add_option("--save-descriptor", ds.save_descriptor, "also write the image descriptor as JSON");
    c_ds->add_option("--out", ds.out, "output JSON (default: stdout)");
    c_ds->callback([&] {
        if (ds.image.empty() && ds.descriptor.empty()) throw CLI::RequiredError("--image or --descriptor");
    });

    CloudArgs cl;
    auto* c_cl = app.add_subcommand("cloud", "render a phrase cloud");
    c_cl->add_option("--scores", cl.scores, "ranked phrase JSON")->required()->check(CLI::ExistingFile);
    c_cl->add_option("--k", cl.k)->check(CLI::PositiveNumber)->capture_default_str();
    c_cl->add_option("--canvas", cl.canvas, "WIDTHxHEIGHT")->capture_default_str();
    c_cl->add_option("--seed", cl.seed)->capture_default_str();
    c_cl->add_option("--out", cl.out, "output PPM")->required();
    c_cl->add_option("--layout", cl.layout, "layout JSON");

    GradcheckArgs gc;
    auto* c_gc = app.add_subcommand("gradcheck", "finite-difference check of every backward pass");
    c_gc->add_option("--seed", gc.seed, "first seed")->capture_default_str();
    c_gc->add_option("--seeds", gc.seeds, "number of seeds")->check(CLI::PositiveNumber)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        apply_thread_cap();
        if (*c_mb) return run_make_backbone(mb);
        if (*c_ms) return run_make_synthetic(ms);
        if (*c_tr) return run_train(tr);
        if (*c_iv) return run_invert(iv);
        if (*c_ds) return run_describe(ds);
        if (*c_cl) return run_cloud(cl);
        if (*c_gc) return run_gradcheck(gc);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
