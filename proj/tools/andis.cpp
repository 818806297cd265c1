// andis: command-line front end.
//
//   andis ingest --input corpus.jsonl
//   andis train --manifest split.json --model-out model.wgn
//   andis evaluate --manifest split.json --strategy gnn --model-in model.wgn
//   andis serve --listen 127.0.0.1:8080 --cache-dir cache

#include "andis/evaluate.hpp"
#include "andis/http.hpp"
#include "andis/simlab.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace andis;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("io_error", "cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& data) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << data;
  if (!out) throw Error("io_error", "cannot write " + p.string());
}

std::map<std::string, Corpus> load_names(const fs::path& input) {
  std::ifstream in(input);
  if (!in) throw Error("io_error", "cannot read " + input.string());
  try {
    return ingest_by_name(in);
  } catch (const Error& e) {
    throw Error(e.code(), input.string() + ": " + e.what());
  }
}

// {"input": "corpus.jsonl", "train": [...], "val": [...], "test": [...]};
// input is relative to the manifest.
struct Manifest {
  fs::path input;
  std::vector<std::string> train, val, test;
};

Manifest load_manifest(const fs::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("parse_error", path.string() + ": not a JSON object");
  Manifest m;
  try {
    m.input = path.parent_path() / j.at("input").get<std::string>();
    for (auto [key, dst] : {std::pair{"train", &m.train}, {"val", &m.val}, {"test", &m.test}})
      if (j.contains(key)) *dst = j.at(key).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error("parse_error", path.string() + ": " + e.what());
  }
  return m;
}

std::vector<TrainingExample> examples(const std::map<std::string, Corpus>& names, const std::vector<std::string>& which) {
  std::vector<TrainingExample> out;
  for (const auto& n : which) {
    auto it = names.find(n);
    if (it == names.end()) throw Error("not_found", "manifest names unknown name_ref '" + n + "'");
    out.push_back(labelled_example(it->second));
  }
  return out;
}

std::shared_ptr<const GnnModel> load_model(const std::string& path) {
  return std::make_shared<GnnModel>(deserialize_model(read_file(path)));
}

// Edge threshold stored next to a model by `train`.
std::optional<double> model_threshold(const std::string& model_path) {
  const fs::path side = model_path + ".json";
  if (!fs::exists(side)) return std::nullopt;
  json j = json::parse(read_file(side), nullptr, false);
  if (j.is_discarded() || !j.contains("edge_threshold")) return std::nullopt;
  return j["edge_threshold"].get<double>();
}

struct StrategyOpts {
  std::string strategy = "baseline";
  std::string model_in;
  std::optional<double> threshold;
  std::uint64_t seed = 0;

  RefineStrategy build() const {
    if (strategy == "baseline") return BaselineStrategy{threshold};
    if (strategy == "gnn") {
      if (model_in.empty()) throw Error("bad_request", "--strategy gnn needs --model-in");
      auto m = load_model(model_in);
      return GnnStrategy{m, seed, m->config.mode};
    }
    throw Error("bad_request", "unknown strategy '" + strategy + "'");
  }
};

void add_strategy(CLI::App* cmd, StrategyOpts& o) {
  cmd->add_option("--strategy", o.strategy, "baseline or gnn")->check(CLI::IsMember({"baseline", "gnn"}));
  cmd->add_option("--model-in", o.model_in, "trained model (gnn)");
  cmd->add_option("--threshold", o.threshold, "baseline summed-similarity threshold");
  cmd->add_option("--seed", o.seed, "node feature seed");
}

void emit(const json& j, const std::string& out) {
  const auto text = j.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_file(out, text);
}

std::vector<DocSet> parse_groups(const json& groups) {
  std::vector<DocSet> out;
  for (const auto& g : groups) {
    auto v = g.get<std::vector<DocId>>();
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"author name disambiguation with annotation workflow"};
  app.require_subcommand(1);
  std::string input, cache_dir, output, manifest_path;

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "load JSON-lines documents and report per name");
  ingest_cmd->add_option("--input", input, "JSON-lines corpus")->required();
  ingest_cmd->add_option("--output", output, "report file (default stdout)");

  // build-graphs
  auto* graphs_cmd = app.add_subcommand("build-graphs", "write per-attribute similarity graphs");
  graphs_cmd->add_option("--input", input)->required();
  graphs_cmd->add_option("--cache-dir", cache_dir)->required();

  // train
  int epochs = 100, dim = 32, dec_hidden = 64;
  double step = 1e-2;
  std::string model_out, mode = "full";
  std::uint64_t seed = 0;
  auto* train_cmd = app.add_subcommand("train", "fit the graph model on labelled names");
  train_cmd->add_option("--manifest", manifest_path, "train/val/test split")->required();
  train_cmd->add_option("--model-out", model_out)->required();
  train_cmd->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
  train_cmd->add_option("--step-size", step)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--mode", mode)->check(CLI::IsMember({"full", "features_only"}));
  train_cmd->add_option("--dim", dim, "feature and layer width")->check(CLI::PositiveNumber);
  train_cmd->add_option("--decoder-hidden", dec_hidden)->check(CLI::PositiveNumber);

  // refine / cluster / evaluate share strategy flags
  StrategyOpts strat;
  std::optional<double> edge_threshold;
  auto* refine_cmd = app.add_subcommand("refine", "write refined graphs");
  refine_cmd->add_option("--input", input)->required();
  refine_cmd->add_option("--cache-dir", cache_dir)->required();
  add_strategy(refine_cmd, strat);

  auto* cluster_cmd = app.add_subcommand("cluster", "refine and cluster every name");
  cluster_cmd->add_option("--input", input)->required();
  cluster_cmd->add_option("--output", output);
  cluster_cmd->add_option("--edge-threshold", edge_threshold, "minimum refined probability for an edge");
  add_strategy(cluster_cmd, strat);

  std::string predictions;
  auto* eval_cmd = app.add_subcommand("evaluate", "pairwise precision/recall/F1 report");
  eval_cmd->add_option("--input", input, "labelled corpus (every name)");
  eval_cmd->add_option("--manifest", manifest_path, "score the test split; val picks the edge threshold");
  eval_cmd->add_option("--predictions", predictions, "score an exported partition (JSON lines) instead");
  eval_cmd->add_option("--edge-threshold", edge_threshold);
  eval_cmd->add_option("--output", output);
  add_strategy(eval_cmd, strat);

  // simulate
  double noise = 1.0;
  int k = 3, authors = 20, names_out = 1;
  std::string corpus_out;
  auto* sim_cmd = app.add_subcommand("simulate", "planted corpus plus simulated annotation workflow");
  sim_cmd->add_option("--seed", seed);
  sim_cmd->add_option("--noise", noise, "scale on every noise rate; 0 = noiseless")->check(CLI::Range(0.0, 5.0));
  sim_cmd->add_option("--k-annotators", k)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--authors", authors)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--corpus-out", corpus_out, "write the planted corpora instead of simulating");
  sim_cmd->add_option("--names", names_out, "number of names written with --corpus-out")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--output", output);

  // serve
  std::string listen = "127.0.0.1:8080";
  auto* serve_cmd = app.add_subcommand("serve", "run the annotation service");
  serve_cmd->add_option("--listen", listen, "host:port");
  serve_cmd->add_option("--cache-dir", cache_dir, "cache and session journal directory");
  serve_cmd->add_option("--k-annotators", k)->check(CLI::PositiveNumber);
  serve_cmd->add_option("--model-in", strat.model_in);
  serve_cmd->add_option("--seed", strat.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      json report = json::array();
      for (const auto& [name, c] : load_names(input)) {
        const auto problems = audit(c.assignment, c.doc_ids());
        report.push_back({{"name_ref", name},
                          {"docs", c.docs.size()},
                          {"groups", c.assignment.groups.size()},
                          {"unassigned", c.assignment.unassigned.size()},
                          {"labelled", c.truth.has_value()},
                          {"problems", problems}});
      }
      emit(report, output);
    } else if (*graphs_cmd) {
      json index = json::object();
      for (const auto& [name, c] : load_names(input)) {
        const auto g = build_graphs(c.docs);
        const auto file = detail::hex64(fnv1a(name)) + ".graphs.wsg";
        write_file(fs::path(cache_dir) / file, serialize_graphs(g));
        index[name] = {{"file", file}, {"docs", g.docs}};
      }
      write_file(fs::path(cache_dir) / "graphs.json", index.dump(2) + "\n");
    } else if (*train_cmd) {
      const auto m = load_manifest(manifest_path);
      const auto names = load_names(m.input);
      const auto train_set = examples(names, m.train), val_set = examples(names, m.val);
      GnnConfig gc;
      gc.input_dim = gc.hidden_dim = gc.output_dim = dim;
      gc.decoder_hidden = dec_hidden;
      gc.mode = parse_decoder_mode(mode);
      gc.seed = seed;
      TrainConfig tc;
      tc.epochs = epochs;
      tc.step_size = step;
      tc.mode = gc.mode;
      tc.seed = seed;
      TrainReport rep;
      const auto model = std::make_shared<GnnModel>(train(GnnModel::init(gc), train_set, val_set, tc, &rep));
      write_file(model_out, serialize_model(*model));
      json summary{{"epochs", epochs},
                   {"step_size", step},
                   {"best_epoch", rep.best_epoch},
                   {"train_loss_first", rep.train_loss.front()},
                   {"train_loss_last", rep.train_loss.back()}};
      if (!val_set.empty()) {
        summary["val_loss_best"] = rep.val_loss[rep.best_epoch];
        summary["edge_threshold"] =
            select_edge_threshold(GnnStrategy{model, seed, gc.mode}, val_set, SlpaConfig{});
      }
      write_file(model_out + ".json", summary.dump(2) + "\n");
      emit(summary, "");
    } else if (*refine_cmd) {
      const auto s = strat.build();
      json index = json::object();
      for (const auto& [name, c] : load_names(input)) {
        const auto r = refine(build_graphs(c.docs), s);
        const auto file = detail::hex64(fnv1a(name)) + "-" + strategy_fingerprint(s) + ".wsg";
        write_file(fs::path(cache_dir) / file,
                   encode_matrices({{kRefinedTag, &r.prob}}, static_cast<std::uint32_t>(r.docs.size())));
        index[name] = {{"file", file}, {"docs", r.docs}};
      }
      write_file(fs::path(cache_dir) / "refined.json", index.dump(2) + "\n");
    } else if (*cluster_cmd) {
      const auto s = strat.build();
      SlpaConfig cfg;
      cfg.edge_threshold = edge_threshold.value_or(
          strat.strategy == "gnn" ? model_threshold(strat.model_in).value_or(0.5) : 0.5);
      // one export object per line, readable by evaluate --predictions
      std::string out;
      for (const auto& [name, c] : load_names(input)) {
        json groups = json::array();
        for (const auto& g : cluster_refined(refine(build_graphs(c.docs), s), cfg))
          groups.push_back(std::vector<DocId>(g.begin(), g.end()));
        out += json{{"name_ref", name}, {"groups", groups}}.dump() + "\n";
      }
      if (output.empty())
        std::cout << out;
      else
        write_file(output, out);
    } else if (*eval_cmd) {
      std::map<std::string, Corpus> names;
      std::vector<std::string> test, val;
      if (!manifest_path.empty()) {
        const auto m = load_manifest(manifest_path);
        names = load_names(m.input);
        test = m.test;
        val = m.val;
      } else if (!input.empty()) {
        names = load_names(input);
        for (const auto& [n, _] : names) test.push_back(n);
      } else {
        throw Error("bad_request", "evaluate needs --input or --manifest");
      }
      std::vector<NameRow> rows;
      if (!predictions.empty()) {
        std::istringstream lines(read_file(predictions));
        std::map<std::string, std::vector<DocSet>> pred;
        std::string line;
        while (std::getline(lines, line))
          if (!line.empty()) {
            auto j = json::parse(line);
            pred[j.at("name_ref").get<std::string>()] = parse_groups(j.at("groups"));
          }
        for (const auto& n : test) {
          const auto ex = examples(names, {n}).front();
          const auto it = pred.find(n);
          if (it == pred.end()) throw Error("not_found", "no prediction for '" + n + "'");
          rows.push_back({n, ex.graphs.size(), pairwise_prf(it->second, ex.truth, DocSet(ex.graphs.docs.begin(), ex.graphs.docs.end()))});
        }
        emit(evaluation_report("predictions", rows), output);
      } else {
        const auto s = strat.build();
        SlpaConfig cfg;
        if (edge_threshold)
          cfg.edge_threshold = *edge_threshold;
        else if (!val.empty())
          cfg.edge_threshold = select_edge_threshold(s, examples(names, val), cfg);
        else if (strat.strategy == "gnn")
          cfg.edge_threshold = model_threshold(strat.model_in).value_or(0.5);
        auto report = evaluation_report(strat.strategy, evaluate_names(s, examples(names, test), cfg));
        report["edge_threshold"] = cfg.edge_threshold;
        emit(report, output);
      }
    } else if (*sim_cmd) {
      SynthConfig sc;
      sc.min_authors = sc.max_authors = authors;
      sc.p_token_noise *= noise;
      sc.p_coauthor_overlap *= noise;
      sc.p_unassigned = std::min(1.0, sc.p_unassigned * noise);
      sc.p_over_partition = std::min(1.0, sc.p_over_partition * noise);
      sc.p_over_merge = std::min(1.0, sc.p_over_merge * noise);
      sc.p_misassign = std::min(1.0, sc.p_misassign * noise);
      if (!corpus_out.empty()) {
        std::string all;
        json ids = json::array();
        for (int i = 0; i < names_out; ++i) {
          sc.name_ref = "synthetic " + std::to_string(i);
          sc.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
          all += to_jsonl(generate_corpus(sc));
          ids.push_back(sc.name_ref);
        }
        write_file(corpus_out, all);
        emit({{"corpus", corpus_out}, {"names", ids}}, output);
      } else {
        sc.seed = seed;
        const auto corpus = generate_corpus(sc);
        auto scaled = [&](std::uint64_t s) {
          AnnotatorModel a;
          a.p_wrong_exclude = std::min(1.0, a.p_wrong_exclude * noise);
          a.p_miss_exclude = std::min(1.0, a.p_miss_exclude * noise);
          a.p_wrong_assign = std::min(1.0, a.p_wrong_assign * noise);
          a.p_split_create = std::min(1.0, a.p_split_create * noise);
          a.seed = s;
          return a;
        };
        std::vector<AnnotatorModel> anns;
        for (int i = 0; i < k; ++i) anns.push_back(scaled(mix_seed(seed, 100 + static_cast<std::uint64_t>(i))));
        auto j = to_json(simulate_workflow(corpus, anns, scaled(mix_seed(seed, 99))));
        j["docs"] = corpus.docs.size();
        j["authors"] = authors;
        j["k"] = k;
        emit(j, output);
      }
    } else if (*serve_cmd) {
      ServiceConfig cfg;
      cfg.cache_dir = cache_dir;
      cfg.k = k;
      cfg.gnn_seed = strat.seed;
      if (!strat.model_in.empty()) cfg.model = load_model(strat.model_in);
      Service svc(cfg);
      httplib::Server server;
      install_routes(server, svc);
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw Error("bad_request", "--listen must be host:port");
      const std::string host = listen.substr(0, colon);
      const int port = std::stoi(listen.substr(colon + 1));
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << host << ":" << port << "\n";
      if (!server.listen(host, port)) throw Error("io_error", "cannot listen on " + listen);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
