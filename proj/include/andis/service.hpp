#pragma once

// Annotation sessions: cached refined graphs, per-annotator workspaces that
// are re-clustered after every operation, and a JSON-lines journal.
//
// Each name has one writer at a time. Readers take the current immutable
// SessionState and never wait on writers.

#include "andis/subcluster.hpp"
#include "andis/workflow.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>

namespace andis {

struct ServiceConfig {
  std::string cache_dir;  // empty: in-memory cache, no journal
  int k = 3;
  SlpaConfig slpa;
  std::shared_ptr<const GnnModel> model;  // required for strategy=gnn
  std::uint64_t gnn_seed = 0;
};

struct CacheStats {
  std::uint64_t hits = 0, computed = 0, loaded = 0;
};

// Static per-name lookup tables built once at ingest.
struct DocIndex {
  std::map<DocId, int> position;  // order of Corpus::docs and the refined graph
  // tokens with nonzero idf, per attribute and document
  std::array<std::vector<std::vector<std::string>>, kAttributeCount> tokens;
  std::map<std::string, std::vector<int>> by_coauthor;

  static DocIndex build(const std::vector<Document>& docs) {
    DocIndex ix;
    for (std::size_t i = 0; i < docs.size(); ++i) ix.position[docs[i].doc_id] = static_cast<int>(i);
    for (auto a : kAttributes) {
      const auto idf = idf_weights(docs, a);
      auto& per_doc = ix.tokens[static_cast<std::size_t>(a)];
      for (const auto& d : docs) {
        std::set<std::string> keep;
        for (const auto& t : tokens_of(d, a))
          if (auto it = idf.find(t); it != idf.end() && it->second > 0.0) keep.insert(t);
        per_doc.emplace_back(keep.begin(), keep.end());
      }
    }
    const auto& co = ix.tokens[static_cast<std::size_t>(AttributeKind::coauthors)];
    for (std::size_t i = 0; i < co.size(); ++i)
      for (const auto& t : co[i]) ix.by_coauthor[t].push_back(static_cast<int>(i));
    return ix;
  }
};

using Clusters = std::map<GroupId, SubClustering>;

struct Workspace {
  Assignment assignment;
  std::vector<Operation> ops;
  Clusters clusters;
};

struct SessionState {
  WorkflowState workflow;
  std::map<std::string, std::shared_ptr<const Workspace>> workspaces;
  std::shared_ptr<const RefinedGraph> refined;
  std::string strategy;
  Clusters snapshot_clusters;
  std::uint64_t version = 0;
};

struct NameSession {
  std::string name;
  std::shared_ptr<const Corpus> corpus;
  std::shared_ptr<const DocIndex> index;
  OpLog log;  // every accepted op, all stages; guarded by write_mu

  std::mutex write_mu;

  std::shared_ptr<const SessionState> state() const {
    std::lock_guard lk(state_mu_);
    return state_;
  }
  void publish(std::shared_ptr<const SessionState> s) {
    std::lock_guard lk(state_mu_);
    state_ = std::move(s);
  }

 private:
  mutable std::mutex state_mu_;
  std::shared_ptr<const SessionState> state_;
};

struct ViewRequest {
  std::string annotator;  // empty: the stage snapshot
  std::vector<GroupId> parents;
  std::vector<AttributeKind> attrs;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t corpus_hash(const Corpus& c) {
  std::uint64_t h = fnv1a(c.name_ref);
  for (const auto& d : c.docs) h = fnv1a(to_record(d, std::nullopt, std::nullopt).dump(), h);
  return h;
}

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

// Parents whose document sets differ between two assignments; removed groups
// are reported too so callers can drop them.
inline std::set<GroupId> changed_parents(const Assignment& before, const Assignment& after) {
  std::set<GroupId> out;
  for (const auto& [id, g] : after.groups) {
    auto it = before.groups.find(id);
    if (it == before.groups.end() || it->second != g) out.insert(id);
  }
  for (const auto& [id, _] : before.groups)
    if (!after.groups.count(id)) out.insert(id);
  if (before.unassigned != after.unassigned) out.insert(kUnassignedParent);
  return out;
}

inline void recluster(Clusters& clusters, const Assignment& a, const std::set<GroupId>& parents,
                      const RefinedGraph& refined, const std::map<DocId, int>& idx, const SlpaConfig& cfg) {
  for (const auto& p : parents) {
    if (p == kUnassignedParent) {
      clusters[p] = subcluster(p, a.unassigned, refined, idx, cfg);
      continue;
    }
    auto it = a.groups.find(p);
    if (it == a.groups.end())
      clusters.erase(p);
    else
      clusters[p] = subcluster(p, it->second, refined, idx, cfg);
  }
}

inline Clusters cluster_all(const Assignment& a, const RefinedGraph& refined, const std::map<DocId, int>& idx,
                            const SlpaConfig& cfg) {
  Clusters c;
  std::set<GroupId> all{kUnassignedParent};
  for (const auto& [id, _] : a.groups) all.insert(id);
  recluster(c, a, all, refined, idx, cfg);
  return c;
}

inline std::string segment_id(const GroupId& parent, std::size_t k) { return parent + "/" + std::to_string(k); }

}  // namespace detail

class Service {
 public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.k < 1) throw Error("invalid_config", "k must be positive");
    if (!cfg_.cache_dir.empty()) {
      std::filesystem::create_directories(journal_dir());
      restore();
    }
  }

  const ServiceConfig& config() const { return cfg_; }

  CacheStats cache_stats() const {
    std::lock_guard lk(cache_mu_);
    return stats_;
  }

  std::vector<std::string> names() const {
    std::lock_guard lk(names_mu_);
    std::vector<std::string> out;
    for (const auto& [n, _] : sessions_) out.push_back(n);
    return out;
  }

  // JSON-lines corpus; records with profile_id form the initial groups.
  nlohmann::json ingest(const std::string& name, const std::string& jsonl, std::optional<int> k = std::nullopt,
                        std::vector<std::string> roster = {}) {
    auto corpus = std::make_shared<Corpus>(ingest_string(jsonl));
    if (corpus->docs.empty()) throw Error("bad_request", "corpus is empty");
    check_partition(corpus->assignment, corpus->doc_ids());
    const int kk = k.value_or(cfg_.k);
    if (kk < 1) throw Error("bad_request", "k must be positive");

    auto s = std::make_shared<NameSession>();
    s->name = name;
    s->index = std::make_shared<DocIndex>(DocIndex::build(corpus->docs));
    auto st = std::make_shared<SessionState>();
    st->workflow.name_ref = corpus->name_ref.empty() ? name : corpus->name_ref;
    st->workflow.k = kk;
    st->workflow.roster = roster;
    st->workflow.snapshot = corpus->assignment;
    s->corpus = std::move(corpus);
    s->publish(st);
    {
      std::lock_guard lk(names_mu_);
      if (sessions_.count(name)) throw Error("already_exists", "name '" + name + "' is already ingested");
      sessions_[name] = s;
    }
    journal(name, {{"event", "ingest"}, {"corpus", jsonl}, {"k", kk}, {"roster", roster}});
    return {{"name", name}, {"docs", s->corpus->docs.size()}, {"groups", st->workflow.snapshot.groups.size()}};
  }

  nlohmann::json precompute(const std::string& name, const std::string& strategy) {
    auto s = session(name);
    std::lock_guard wl(s->write_mu);
    const RefineStrategy strat = parse_strategy(strategy);
    const std::string key = s->name + "-" + detail::hex64(detail::corpus_hash(*s->corpus)) + "-" +
                            strategy_fingerprint(strat);
    bool hit = false;
    auto refined = cached_refined(key, *s->corpus, strat, hit);

    auto next = std::make_shared<SessionState>(*s->state());
    next->refined = refined;
    next->strategy = strategy;
    next->snapshot_clusters = detail::cluster_all(next->workflow.snapshot, *refined, s->index->position, cfg_.slpa);
    for (auto& [who, ws] : next->workspaces) {
      auto w = std::make_shared<Workspace>(*ws);
      w->clusters = detail::cluster_all(w->assignment, *refined, s->index->position, cfg_.slpa);
      ws = w;
    }
    ++next->version;
    s->publish(next);
    journal(name, {{"event", "precompute"}, {"strategy", strategy}});
    return {{"name", name}, {"key", key}, {"cache_hit", hit}};
  }

  // Applies one op to the annotator's workspace and returns the view of the
  // parents it touched.
  nlohmann::json submit_op(const std::string& name, const std::string& annotator, const Operation& op) {
    auto s = session(name);
    std::lock_guard wl(s->write_mu);
    auto touched = apply_locked(*s, annotator, op, detail::now_ms());
    return view(*s, ViewRequest{annotator, std::move(touched), {}});
  }

  // Explicit submission, or one derived from the annotator's workspace.
  nlohmann::json submit(const std::string& name, const std::string& annotator,
                        const std::optional<Submission>& explicit_sub = std::nullopt) {
    auto s = session(name);
    std::lock_guard wl(s->write_mu);
    submit_locked(*s, annotator, explicit_sub);
    nlohmann::json ev{{"event", "submission"}, {"annotator", annotator}};
    if (explicit_sub) ev["submission"] = to_json(*explicit_sub);
    journal(name, ev);
    const auto st = s->state();
    return {{"stage", to_string(st->workflow.stage)},
            {"submissions", st->workflow.submissions.size()},
            {"required", required_submissions(st->workflow)}};
  }

  nlohmann::json advance(const std::string& name) {
    auto s = session(name);
    std::lock_guard wl(s->write_mu);
    advance_locked(*s);
    journal(name, {{"event", "advance"}});
    const auto st = s->state();
    return {{"stage", to_string(st->workflow.stage)}, {"groups", st->workflow.snapshot.groups.size()},
            {"unassigned", st->workflow.snapshot.unassigned.size()}};
  }

  nlohmann::json export_assignment(const std::string& name) const {
    auto s = session(name);
    const auto st = s->state();
    return export_json(st->workflow.name_ref, st->workflow.snapshot);
  }

  nlohmann::json state_view(const std::string& name, const ViewRequest& req) const {
    return view(*session(name), req);
  }

  // Current assignment seen by an annotator (the stage snapshot when the
  // annotator has no workspace yet).
  Assignment live_assignment(const std::string& name, const std::string& annotator) const {
    const auto st = session(name)->state();
    auto it = st->workspaces.find(annotator);
    return it == st->workspaces.end() ? st->workflow.snapshot : it->second->assignment;
  }

  std::shared_ptr<const SessionState> state(const std::string& name) const { return session(name)->state(); }

  std::vector<OpRecord> op_log(const std::string& name) const {
    auto s = session(name);
    std::lock_guard wl(s->write_mu);
    return s->log.records();
  }

 private:
  ServiceConfig cfg_;
  mutable std::mutex names_mu_;
  std::map<std::string, std::shared_ptr<NameSession>> sessions_;

  mutable std::mutex cache_mu_;
  std::map<std::string, std::shared_ptr<const RefinedGraph>> cache_;
  CacheStats stats_;

  mutable std::mutex journal_mu_;
  bool replaying_ = false;

  std::filesystem::path journal_dir() const { return std::filesystem::path(cfg_.cache_dir) / "sessions"; }

  std::shared_ptr<NameSession> session(const std::string& name) const {
    std::lock_guard lk(names_mu_);
    auto it = sessions_.find(name);
    if (it == sessions_.end()) throw Error("not_found", "unknown name '" + name + "'");
    return it->second;
  }

  RefineStrategy parse_strategy(const std::string& s) const {
    if (s == "baseline") return BaselineStrategy{};
    if (s == "gnn") {
      if (!cfg_.model) throw Error("bad_request", "gnn strategy needs a model (start the service with a model)");
      return GnnStrategy{cfg_.model, cfg_.gnn_seed, cfg_.model->config.mode};
    }
    throw Error("bad_request", "unknown strategy '" + s + "'");
  }

  std::shared_ptr<const RefinedGraph> cached_refined(const std::string& key, const Corpus& c,
                                                     const RefineStrategy& strat, bool& hit) {
    {
      std::lock_guard lk(cache_mu_);
      if (auto it = cache_.find(key); it != cache_.end()) {
        ++stats_.hits;
        hit = true;
        return it->second;
      }
    }
    hit = false;
    std::vector<DocId> order;
    for (const auto& d : c.docs) order.push_back(d.doc_id);
    std::shared_ptr<const RefinedGraph> out;
    const auto file = std::filesystem::path(cfg_.cache_dir) / (key + ".wsg");
    if (!cfg_.cache_dir.empty() && std::filesystem::exists(file)) {
      std::ifstream in(file, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      auto mats = decode_matrices(bytes);
      if (mats.size() != 1 || mats[0].first != kRefinedTag || static_cast<std::size_t>(mats[0].second.rows()) != order.size())
        throw Error("format_error", "cache entry " + file.string() + " does not hold a refined graph");
      out = std::make_shared<RefinedGraph>(RefinedGraph{order, std::move(mats[0].second)});
      std::lock_guard lk(cache_mu_);
      ++stats_.loaded;
    } else {
      out = std::make_shared<RefinedGraph>(refine(build_graphs(c.docs), strat));
      if (!cfg_.cache_dir.empty()) {
        const auto tmp = file.string() + ".tmp";
        {
          std::ofstream o(tmp, std::ios::binary);
          o << encode_matrices({{kRefinedTag, &out->prob}}, static_cast<std::uint32_t>(order.size()));
        }
        std::filesystem::rename(tmp, file);
        write_manifest(key, c);
      }
      std::lock_guard lk(cache_mu_);
      ++stats_.computed;
    }
    std::lock_guard lk(cache_mu_);
    cache_[key] = out;
    return out;
  }

  void write_manifest(const std::string& key, const Corpus& c) {
    const auto path = std::filesystem::path(cfg_.cache_dir) / "manifest.json";
    std::lock_guard lk(journal_mu_);
    nlohmann::json m = nlohmann::json::object();
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      m = nlohmann::json::parse(in, nullptr, false);
      if (m.is_discarded() || !m.is_object()) m = nlohmann::json::object();
    }
    m[key] = {{"name_ref", c.name_ref}, {"docs", c.docs.size()}, {"file", key + ".wsg"}};
    std::ofstream(path) << m.dump(2) << "\n";
  }

  std::shared_ptr<const RefinedGraph> require_refined(const SessionState& st) const {
    if (!st.refined) throw Error("not_precomputed", "precompute the name before editing or viewing it");
    return st.refined;
  }

  // Returns the surviving parents the op touched.
  std::vector<GroupId> apply_locked(NameSession& s, const std::string& annotator, const Operation& op,
                                    std::int64_t ts) {
    if (annotator.empty()) throw Error("bad_request", "annotator is required");
    const auto cur = s.state();
    const auto refined = require_refined(*cur);
    const auto& wf = cur->workflow;
    if (wf.stage == Stage::Final) throw Error("invalid_stage", "workflow is final");
    check_permitted(wf.stage, op);
    if (!wf.roster.empty() && std::find(wf.roster.begin(), wf.roster.end(), annotator) == wf.roster.end())
      throw Error("unknown_annotator", annotator);
    if (wf.stage == Stage::Cleaning)
      for (const auto& [who, _] : cur->workspaces)
        if (who != annotator) throw Error("forbidden_op", "cleaning is already held by " + who);

    auto it = cur->workspaces.find(annotator);
    auto w = it == cur->workspaces.end()
                 ? std::make_shared<Workspace>(Workspace{wf.snapshot, {}, cur->snapshot_clusters})
                 : std::make_shared<Workspace>(*it->second);
    const Assignment before = w->assignment;
    w->assignment = apply_op(before, op);
    w->ops.push_back(op);
    const auto touched = detail::changed_parents(before, w->assignment);
    detail::recluster(w->clusters, w->assignment, touched, *refined, s.index->position, cfg_.slpa);

    auto next = std::make_shared<SessionState>(*cur);
    next->workspaces[annotator] = w;
    ++next->version;
    s.log.append(annotator, wf.stage, op, ts);
    s.publish(next);
    journal(s.name, {{"event", "op"}, {"annotator", annotator}, {"operation", to_json(op)}, {"timestamp", ts}});
    std::vector<GroupId> out;
    for (const auto& p : touched)
      if (p == kUnassignedParent || w->assignment.groups.count(p)) out.push_back(p);
    return out;
  }

  void submit_locked(NameSession& s, const std::string& annotator, const std::optional<Submission>& explicit_sub) {
    if (annotator.empty()) throw Error("bad_request", "annotator is required");
    const auto cur = s.state();
    const auto& wf = cur->workflow;
    if (wf.stage == Stage::Final) throw Error("invalid_stage", "workflow is final");
    Submission sub;
    if (explicit_sub) {
      sub = *explicit_sub;
      if (sub.annotator != annotator) throw Error("bad_request", "submission annotator does not match");
    } else {
      auto it = cur->workspaces.find(annotator);
      sub = it == cur->workspaces.end()
                ? derive_submission(annotator, wf.stage, wf.snapshot, wf.snapshot, {})
                : derive_submission(annotator, wf.stage, wf.snapshot, it->second->assignment, it->second->ops);
    }
    auto next = std::make_shared<SessionState>(*cur);
    add_submission(next->workflow, std::move(sub));
    ++next->version;
    s.publish(next);
  }

  void advance_locked(NameSession& s) {
    const auto cur = s.state();
    auto next = std::make_shared<SessionState>(*cur);
    next->workflow = advance_stage(cur->workflow);
    next->workspaces.clear();
    if (next->refined)
      next->snapshot_clusters =
          detail::cluster_all(next->workflow.snapshot, *next->refined, s.index->position, cfg_.slpa);
    ++next->version;
    s.publish(next);
  }

  // ---- view -------------------------------------------------------------

  nlohmann::json view(const NameSession& s, const ViewRequest& req) const {
    const auto st = s.state();
    const auto refined = require_refined(*st);
    const Assignment* a = &st->workflow.snapshot;
    const Clusters* clusters = &st->snapshot_clusters;
    if (!req.annotator.empty())
      if (auto it = st->workspaces.find(req.annotator); it != st->workspaces.end()) {
        a = &it->second->assignment;
        clusters = &it->second->clusters;
      }
    for (const auto& p : req.parents)
      if (p != kUnassignedParent && !a->groups.count(p)) throw Error("not_found", "no group '" + p + "'");

    const auto& pos = s.index->position;
    auto segments = [&](const GroupId& parent) {
      nlohmann::json out = nlohmann::json::array();
      auto it = clusters->find(parent);
      if (it == clusters->end()) return out;
      for (std::size_t k = 0; k < it->second.subgroups.size(); ++k)
        out.push_back({{"id", detail::segment_id(parent, k)}, {"size", it->second.subgroups[k].size()}});
      return out;
    };

    nlohmann::json groups = nlohmann::json::array();
    for (const auto& [id, docs] : a->groups)
      groups.push_back({{"id", id}, {"size", docs.size()}, {"quality", group_quality(docs, *refined, pos)},
                        {"segments", segments(id)}});

    nlohmann::json allowed = nlohmann::json::array();
    if (st->workflow.stage != Stage::Final)
      for (auto k : allowed_ops(st->workflow.stage)) allowed.push_back(to_string(k));

    return {{"name_ref", st->workflow.name_ref},
            {"stage", to_string(st->workflow.stage)},
            {"allowed_ops", allowed},
            {"annotator", req.annotator},
            {"version", st->version},
            {"strategy", st->strategy},
            {"groups", groups},
            {"unassigned", {{"size", a->unassigned.size()}, {"segments", segments(kUnassignedParent)}}},
            {"center", center(s, *a, *clusters, req)}};
  }

  static double group_quality(const DocSet& docs, const RefinedGraph& r, const std::map<DocId, int>& pos) {
    if (docs.size() < 2) return 1.0;
    std::vector<int> ix;
    for (const auto& d : docs) ix.push_back(pos.at(d));
    double sum = 0.0;
    for (std::size_t i = 0; i < ix.size(); ++i)
      for (std::size_t j = i + 1; j < ix.size(); ++j) sum += r.prob(ix[i], ix[j]);
    return sum / (static_cast<double>(ix.size()) * static_cast<double>(ix.size() - 1) / 2.0);
  }

  nlohmann::json center(const NameSession& s, const Assignment& a, const Clusters& clusters,
                        const ViewRequest& req) const {
    const auto& ix = *s.index;
    const auto& docs = s.corpus->docs;

    // doc position -> (parent, segment id)
    std::vector<std::pair<GroupId, std::string>> where(docs.size());
    for (const auto& [parent, sc] : clusters)
      for (std::size_t k = 0; k < sc.subgroups.size(); ++k)
        for (const auto& d : sc.subgroups[k]) where[ix.position.at(d)] = {parent, detail::segment_id(parent, k)};

    std::set<GroupId> shown(req.parents.begin(), req.parents.end());
    std::vector<int> displayed;
    std::vector<char> is_shown(docs.size(), 0);
    for (const auto& p : shown) {
      const DocSet& members = p == kUnassignedParent ? a.unassigned : a.groups.at(p);
      for (const auto& d : members) {
        const int i = ix.position.at(d);
        displayed.push_back(i);
        is_shown[i] = 1;
      }
    }
    std::sort(displayed.begin(), displayed.end());

    nlohmann::json nodes = nlohmann::json::array();
    for (int i : displayed)
      nodes.push_back({{"doc_id", docs[i].doc_id},
                       {"parent", where[i].first},
                       {"segment", where[i].second},
                       {"title", join(docs[i].title_tokens, " ")}});

    // edges: any selected attribute with a shared nonzero-idf token
    std::map<std::pair<int, int>, std::set<std::string>> edge_attrs;
    for (auto attr : req.attrs) {
      std::map<std::string, std::vector<int>> inv;
      for (int i : displayed)
        for (const auto& t : ix.tokens[static_cast<std::size_t>(attr)][i]) inv[t].push_back(i);
      for (const auto& [_, list] : inv)
        for (std::size_t x = 0; x < list.size(); ++x)
          for (std::size_t y = x + 1; y < list.size(); ++y) edge_attrs[{list[x], list[y]}].insert(to_string(attr));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [pr, attrs] : edge_attrs)
      edges.push_back({{"a", docs[pr.first].doc_id}, {"b", docs[pr.second].doc_id}, {"attrs", attrs}});

    // potential links: shared coauthor with a doc outside the displayed parents
    std::set<std::pair<int, std::string>> links;
    const auto& co = ix.tokens[static_cast<std::size_t>(AttributeKind::coauthors)];
    for (int i : displayed)
      for (const auto& t : co[i])
        for (int j : ix.by_coauthor.at(t)) {
          if (is_shown[j]) continue;
          const auto& [parent, seg] = where[j];
          links.emplace(i, parent == kUnassignedParent ? seg : parent);
        }
    nlohmann::json potential = nlohmann::json::array();
    for (const auto& [i, target] : links)
      potential.push_back({{"doc", docs[i].doc_id},
                           {"target", target},
                           {"shadow", target.rfind(kUnassignedParent + "/", 0) == 0}});

    // per-segment feature counts, all attributes
    nlohmann::json freq = nlohmann::json::array();
    for (const auto& p : shown) {
      auto it = clusters.find(p);
      if (it == clusters.end()) continue;
      for (std::size_t k = 0; k < it->second.subgroups.size(); ++k) {
        nlohmann::json per_attr = nlohmann::json::object();
        for (auto attr : kAttributes) {
          std::map<std::string, int> count;
          for (const auto& d : it->second.subgroups[k])
            for (const auto& t : ix.tokens[static_cast<std::size_t>(attr)][ix.position.at(d)]) ++count[t];
          std::vector<std::pair<std::string, int>> rows(count.begin(), count.end());
          std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.second > y.second; });
          per_attr[to_string(attr)] = rows;
        }
        freq.push_back({{"segment", detail::segment_id(p, k)}, {"features", per_attr}});
      }
    }

    return {{"parents", std::vector<GroupId>(shown.begin(), shown.end())},
            {"attrs", [&] {
               std::vector<std::string> v;
               for (auto x : req.attrs) v.push_back(to_string(x));
               return v;
             }()},
            {"nodes", nodes},
            {"edges", edges},
            {"potential_links", potential},
            {"frequencies", freq}};
  }

  // ---- journal ----------------------------------------------------------

  std::filesystem::path journal_path(const std::string& name) const {
    return journal_dir() / (detail::hex64(fnv1a(name)) + ".jsonl");
  }

  void journal(const std::string& name, nlohmann::json ev) {
    if (cfg_.cache_dir.empty() || replaying_) return;
    ev["name"] = name;
    std::lock_guard lk(journal_mu_);
    std::ofstream out(journal_path(name), std::ios::app);
    out << ev.dump() << "\n";
    out.flush();
    if (!out) throw Error("io_error", "cannot append to journal for '" + name + "'");
  }

  void restore() {
    replaying_ = true;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(journal_dir()))
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      std::ifstream in(f);
      std::string line;
      std::size_t no = 0;
      while (std::getline(in, line)) {
        ++no;
        if (line.empty()) continue;
        try {
          replay_event(nlohmann::json::parse(line));
        } catch (const std::exception& e) {
          replaying_ = false;
          throw Error("format_error", f.string() + ":" + std::to_string(no) + ": " + e.what());
        }
      }
    }
    replaying_ = false;
  }

  void replay_event(const nlohmann::json& ev) {
    const auto name = ev.at("name").get<std::string>();
    const auto kind = ev.at("event").get<std::string>();
    if (kind == "ingest") {
      ingest(name, ev.at("corpus").get<std::string>(), ev.at("k").get<int>(),
             ev.at("roster").get<std::vector<std::string>>());
    } else if (kind == "precompute") {
      precompute(name, ev.at("strategy").get<std::string>());
    } else if (kind == "op") {
      auto s = session(name);
      std::lock_guard wl(s->write_mu);
      apply_locked(*s, ev.at("annotator").get<std::string>(), operation_from_json(ev.at("operation")),
                   ev.at("timestamp").get<std::int64_t>());
    } else if (kind == "submission") {
      std::optional<Submission> sub;
      if (ev.contains("submission")) sub = submission_from_json(ev.at("submission"));
      submit(name, ev.at("annotator").get<std::string>(), sub);
    } else if (kind == "advance") {
      advance(name);
    } else {
      throw Error("format_error", "unknown journal event '" + kind + "'");
    }
  }
};

}  // namespace andis
