#include "andis/service.hpp"

#include "generators.hpp"
#include "service_fixture.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace andis;
using nlohmann::json;

namespace {

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

// Random op legal in `stage`, or nullopt after a bounded number of draws.
std::optional<Operation> legal_op(std::mt19937_64& rng, const Assignment& a, Stage stage) {
  for (int t = 0; t < 50; ++t)
    if (auto op = gen::random_valid_op(rng, a); op && allowed_ops(stage).count(kind_of(*op))) return op;
  return std::nullopt;
}

std::unique_ptr<Service> ready_service(const std::string& corpus = fixture::small_corpus(),
                                       const std::string& dir = "") {
  ServiceConfig cfg;
  cfg.cache_dir = dir;
  auto svc = std::make_unique<Service>(cfg);
  svc->ingest("n", corpus);
  svc->precompute("n", "baseline");
  return svc;
}

const json* find_group(const json& view, const std::string& id) {
  for (const auto& g : view["groups"])
    if (g["id"] == id) return &g;
  return nullptr;
}

}  // namespace

TEST(Service, IngestAndErrors) {
  Service svc(ServiceConfig{});
  auto r = svc.ingest("n", fixture::small_corpus());
  EXPECT_EQ(r["docs"], 7);
  EXPECT_EQ(r["groups"], 3);
  EXPECT_EQ(code_of([&] { svc.ingest("n", fixture::small_corpus()); }), "already_exists");
  EXPECT_EQ(code_of([&] { svc.ingest("m", ""); }), "bad_request");
  EXPECT_EQ(code_of([&] { svc.ingest("m", "{bad\n"); }), "parse_error");
  EXPECT_EQ(code_of([&] { svc.precompute("nope", "baseline"); }), "not_found");
  EXPECT_EQ(code_of([&] { svc.precompute("n", "magic"); }), "bad_request");
  EXPECT_EQ(code_of([&] { svc.precompute("n", "gnn"); }), "bad_request");
  EXPECT_EQ(code_of([&] { svc.submit_op("n", "a", Separate{"g1", {"d1"}}); }), "not_precomputed");
}

TEST(Service, PrecomputeIsIdempotent) {
  Service svc(ServiceConfig{});
  svc.ingest("n", fixture::small_corpus());
  EXPECT_FALSE(svc.precompute("n", "baseline")["cache_hit"].get<bool>());
  EXPECT_TRUE(svc.precompute("n", "baseline")["cache_hit"].get<bool>());
  EXPECT_EQ(svc.cache_stats().computed, 1u);
  EXPECT_EQ(svc.cache_stats().hits, 1u);

  // edited corpus: new content hash, recomputed
  auto edited = fixture::small_corpus();
  edited.replace(edited.find("graph mining"), 12, "graph theory");
  svc.ingest("n2", edited);
  svc.precompute("n2", "baseline");
  EXPECT_EQ(svc.cache_stats().computed, 2u);
}

TEST(Service, DiskCacheIsReusedAcrossRestarts) {
  fixture::TempDir dir;
  json fresh;
  {
    auto svc_ptr = ready_service(fixture::small_corpus(), dir.path.string());
    auto& svc = *svc_ptr;
    EXPECT_EQ(svc.cache_stats().computed, 1u);
    fresh = svc.state_view("n", {"", {"g1", "~"}, {AttributeKind::coauthors}});
  }
  Service again(ServiceConfig{dir.path.string()});
  EXPECT_EQ(again.cache_stats().computed, 0u);
  EXPECT_EQ(again.cache_stats().loaded, 1u);
  EXPECT_EQ(again.state_view("n", {"", {"g1", "~"}, {AttributeKind::coauthors}}), fresh);
  EXPECT_TRUE(std::filesystem::exists(dir.path / "manifest.json"));
}

TEST(Service, CachedViewEqualsFreshRecompute) {
  const auto corpus = fixture::synthetic(4);
  fixture::TempDir dir;
  ready_service(to_jsonl(corpus), dir.path.string());
  Service cached(ServiceConfig{dir.path.string()});
  auto fresh_ptr = ready_service(to_jsonl(corpus));
  auto& fresh = *fresh_ptr;
  ASSERT_EQ(cached.cache_stats().loaded, 1u);
  const auto st = fresh.state("n");
  std::vector<GroupId> parents{kUnassignedParent};
  for (const auto& [id, _] : st->workflow.snapshot.groups) parents.push_back(id);
  ViewRequest req{"", parents, {kAttributes.begin(), kAttributes.end()}};
  EXPECT_EQ(cached.state_view("n", req), fresh.state_view("n", req));
  EXPECT_EQ(cached.state("n")->refined->prob, st->refined->prob);
}

TEST(Service, StagePermissions) {
  auto svc_ptr = ready_service();
  auto& svc = *svc_ptr;
  EXPECT_EQ(code_of([&] { svc.submit_op("n", "a", Merge{"g1", "g2"}); }), "forbidden_op");
  EXPECT_EQ(code_of([&] { svc.submit_op("n", "a", Separate{"g1", {"zz"}}); }), "invalid_op");
  svc.submit_op("n", "a", Separate{"g1", {"d3"}});
  EXPECT_EQ(code_of([&] { svc.submit_op("n", "b", Separate{"g2", {"d4"}}); }), "forbidden_op");
  EXPECT_EQ(svc.op_log("n").size(), 1u);
}

TEST(Service, ExcludeReclustersUnassignedPool) {
  auto svc_ptr = ready_service();
  auto& svc = *svc_ptr;
  svc.submit("n", "cleaner");
  svc.advance("n");
  auto v = svc.submit_op("n", "a", Exclude{"g1", {"d3"}});
  EXPECT_EQ(v["unassigned"]["size"], 2);
  std::size_t seg_total = 0;
  for (const auto& s : v["unassigned"]["segments"]) seg_total += s["size"].get<std::size_t>();
  EXPECT_EQ(seg_total, 2u);
  // the op view centers on the touched parents
  EXPECT_EQ(v["center"]["parents"], (json{"g1", "~"}));
  // other annotators still see the snapshot
  EXPECT_EQ(svc.state_view("n", {"b", {}, {}})["unassigned"]["size"], 1);
}

TEST(Service, LiveStateEqualsReplay) {
  const auto corpus = fixture::synthetic(5);
  auto svc_ptr = ready_service(to_jsonl(corpus));
  auto& svc = *svc_ptr;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 40; ++i)
    if (auto op = legal_op(rng, svc.live_assignment("n", "x"), Stage::Cleaning)) svc.submit_op("n", "x", *op);
  OpLog log;
  for (const auto& r : svc.op_log("n")) log.append(r.annotator, r.stage, r.op, r.timestamp);
  EXPECT_GT(log.size(), 10u);
  EXPECT_EQ(replay(corpus.assignment, log), svc.live_assignment("n", "x"));
  // every workspace sub-clustering partitions its parent
  const auto st = svc.state("n");
  const auto& ws = *st->workspaces.at("x");
  for (const auto& [id, docs] : ws.assignment.groups) {
    DocSet u;
    for (const auto& s : ws.clusters.at(id).subgroups) u.insert(s.begin(), s.end());
    EXPECT_EQ(u, docs) << id;
  }
}

TEST(Service, ViewFixture) {
  auto svc_ptr = ready_service();
  auto& svc = *svc_ptr;
  auto none = svc.state_view("n", {"", {"g1"}, {}});
  EXPECT_TRUE(none["center"]["edges"].empty());
  EXPECT_EQ(none["center"]["nodes"].size(), 3u);
  EXPECT_EQ((*find_group(none, "g3"))["quality"], 1.0);

  // one shared coauthor across assigned groups, one with the unassigned doc
  auto links = none["center"]["potential_links"];
  ASSERT_EQ(links.size(), 2u);
  EXPECT_EQ(links[0], (json{{"doc", "d1"}, {"target", "~/0"}, {"shadow", true}}));
  EXPECT_EQ(links[1], (json{{"doc", "d3"}, {"target", "g2"}, {"shadow", false}}));

  // displaying both ends removes the link
  auto both = svc.state_view("n", {"", {"g1", "g2", "~"}, {AttributeKind::coauthors}});
  EXPECT_TRUE(both["center"]["potential_links"].empty());
  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& e : both["center"]["edges"]) edges.emplace(e["a"], e["b"]);
  EXPECT_EQ(edges, (std::set<std::pair<std::string, std::string>>{
                       {"d1", "d2"}, {"d2", "d3"}, {"d3", "d5"}, {"d4", "d5"}, {"d1", "d6"}}));

  EXPECT_EQ(code_of([&] { svc.state_view("n", {"", {"g9"}, {}}); }), "not_found");
}

TEST(Service, QualityIsMeanIntraGroupProbability) {
  const auto corpus = fixture::synthetic(6);
  auto svc_ptr = ready_service(to_jsonl(corpus));
  auto& svc = *svc_ptr;
  const auto st = svc.state("n");
  const auto& r = *st->refined;
  std::map<DocId, int> pos;
  for (std::size_t i = 0; i < r.docs.size(); ++i) pos[r.docs[i]] = static_cast<int>(i);
  auto v = svc.state_view("n", {});
  for (const auto& [id, docs] : st->workflow.snapshot.groups) {
    std::vector<DocId> d(docs.begin(), docs.end());
    double sum = 0;
    int pairs = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t j = 0; j < d.size(); ++j)
        if (i != j) {
          sum += r.prob(pos[d[i]], pos[d[j]]);
          ++pairs;
        }
    const double want = pairs ? sum / pairs : 1.0;
    EXPECT_NEAR((*find_group(v, id))["quality"].get<double>(), want, 1e-12) << id;
  }
}

// Edges and potential links against a direct scan with attribute_similarity.
TEST(Service, ViewMatchesSimilarityOracle) {
  const auto corpus = fixture::synthetic(7);
  auto svc_ptr = ready_service(to_jsonl(corpus));
  auto& svc = *svc_ptr;
  const auto& docs = corpus.docs;
  const auto& a = corpus.assignment;
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<GroupId> parents;
    for (const auto& [id, _] : a.groups)
      if (rng() % 3 == 0) parents.push_back(id);
    if (rng() % 2) parents.push_back(kUnassignedParent);
    std::vector<AttributeKind> attrs;
    for (auto x : kAttributes)
      if (rng() % 2) attrs.push_back(x);
    auto view = svc.state_view("n", {"", parents, attrs});

    std::set<DocId> shown;
    for (const auto& p : parents) {
      const auto& m = p == kUnassignedParent ? a.unassigned : a.groups.at(p);
      shown.insert(m.begin(), m.end());
    }
    std::set<std::pair<DocId, DocId>> want_edges, got_edges;
    std::array<IdfMap, kAttributeCount> idf;
    for (auto x : kAttributes) idf[static_cast<std::size_t>(x)] = idf_weights(docs, x);
    for (const auto& x : docs)
      for (const auto& y : docs) {
        if (x.doc_id >= y.doc_id || !shown.count(x.doc_id) || !shown.count(y.doc_id)) continue;
        for (auto at : attrs)
          if (attribute_similarity(x, y, at, idf[static_cast<std::size_t>(at)]) > 0) want_edges.emplace(x.doc_id, y.doc_id);
      }
    for (const auto& e : view["center"]["edges"]) got_edges.emplace(e["a"], e["b"]);
    EXPECT_EQ(got_edges, want_edges) << trial;

    std::set<std::pair<DocId, std::string>> want_links, got_links;
    const auto& co = idf[static_cast<std::size_t>(AttributeKind::coauthors)];
    for (const auto& x : docs)
      for (const auto& y : docs) {
        if (!shown.count(x.doc_id) || shown.count(y.doc_id)) continue;
        if (attribute_similarity(x, y, AttributeKind::coauthors, co) <= 0) continue;
        auto g = a.group_of(y.doc_id);
        want_links.emplace(x.doc_id, g ? *g : "~");
      }
    for (const auto& l : view["center"]["potential_links"]) {
      std::string t = l["target"];
      EXPECT_EQ(l["shadow"].get<bool>(), t.rfind("~/", 0) == 0);
      got_links.emplace(l["doc"], t.rfind("~/", 0) == 0 ? "~" : t);
    }
    EXPECT_EQ(got_links, want_links) << trial;
  }
}

TEST(Service, FrequencyTablesCountSegmentDocs) {
  auto svc_ptr = ready_service();
  auto& svc = *svc_ptr;
  auto v = svc.state_view("n", {"", {"g1"}, {}});
  std::map<std::string, int> ann;
  for (const auto& seg : v["center"]["frequencies"])
    for (const auto& row : seg["features"]["coauthors"]) ann[row[0]] += row[1].get<int>();
  EXPECT_EQ(ann["ann"], 2);
  EXPECT_EQ(ann["bob"], 2);
  EXPECT_EQ(ann["dave"], 1);
}

// Two writers on one name: the result equals one of the sequential orders.
TEST(Service, ConcurrentWritersSerialize) {
  const auto corpus = fixture::synthetic(8, 8);
  for (int round = 0; round < 5; ++round) {
    auto svc_ptr = ready_service(to_jsonl(corpus));
    auto& svc = *svc_ptr;
    svc.submit("n", "cleaner");
    svc.advance("n");
    std::mt19937_64 rng(round);
    const auto snap = svc.state("n")->workflow.snapshot;
    auto op_a = legal_op(rng, snap, Stage::Verifying), op_b = legal_op(rng, snap, Stage::Verifying);
    ASSERT_TRUE(op_a && op_b);
    // same annotator so the ops compose in one workspace
    std::thread t1([&] {
      try {
        svc.submit_op("n", "x", *op_a);
      } catch (const Error&) {
      }
    });
    std::thread t2([&] {
      try {
        svc.submit_op("n", "x", *op_b);
      } catch (const Error&) {
      }
    });
    t1.join();
    t2.join();
    const auto live = svc.live_assignment("n", "x");
    std::vector<Assignment> sequential;
    for (const auto& order : {std::vector<Operation>{*op_a, *op_b}, std::vector<Operation>{*op_b, *op_a}}) {
      Assignment s = snap;
      for (const auto& op : order) try {
          s = apply_op(s, op);
        } catch (const Error&) {
        }
      sequential.push_back(s);
    }
    EXPECT_TRUE(live == sequential[0] || live == sequential[1]) << round;
    OpLog log;
    for (const auto& r : svc.op_log("n")) log.append(r.annotator, r.stage, r.op, r.timestamp);
    EXPECT_EQ(replay(snap, log), live);
  }
}

TEST(Service, JournalRestoresEverySession) {
  fixture::TempDir dir;
  const auto corpus = fixture::synthetic(9);
  std::shared_ptr<const SessionState> before;
  std::vector<OpRecord> log_before;
  {
    auto svc_ptr = ready_service(to_jsonl(corpus), dir.path.string());
    auto& svc = *svc_ptr;
    svc.ingest("other", fixture::small_corpus());
    std::mt19937_64 rng(4);
    for (int i = 0; i < 10; ++i)
      if (auto op = legal_op(rng, svc.live_assignment("n", "c"), Stage::Cleaning)) svc.submit_op("n", "c", *op);
    svc.submit("n", "c");
    svc.advance("n");
    for (const char* who : {"a", "b"})
      for (int i = 0; i < 5; ++i)
        if (auto op = legal_op(rng, svc.live_assignment("n", who), Stage::Verifying)) svc.submit_op("n", who, *op);
    svc.submit("n", "a");
    before = svc.state("n");
    log_before = svc.op_log("n");
  }
  Service again(ServiceConfig{dir.path.string()});
  EXPECT_EQ(again.names(), (std::vector<std::string>{"n", "other"}));
  const auto after = again.state("n");
  EXPECT_EQ(after->workflow, before->workflow);
  for (const char* who : {"a", "b"})
    EXPECT_EQ(after->workspaces.at(who)->assignment, before->workspaces.at(who)->assignment);
  EXPECT_EQ(after->version, before->version);
  ASSERT_EQ(again.op_log("n").size(), log_before.size());
  for (std::size_t i = 0; i < log_before.size(); ++i)
    EXPECT_EQ(to_json(again.op_log("n")[i]), to_json(log_before[i]));
}

// Perfect simulated annotators driven through the service reach the truth.
TEST(Service, FullWorkflowReachesTruth) {
  const auto corpus = fixture::synthetic(10);
  auto svc_ptr = ready_service(to_jsonl(corpus));
  auto& svc = *svc_ptr;
  std::mt19937_64 rng(1);
  auto submit_for = [&](const std::string& who) {
    const auto snap = svc.state("n")->workflow.snapshot;
    const auto st = svc.state("n")->workflow.stage;
    svc.submit("n", who, simulate_annotator(*corpus.truth, snap, st, perfect_annotator(), who, rng));
  };
  EXPECT_EQ(code_of([&] { svc.advance("n"); }), "missing_submissions");
  submit_for("c");
  svc.advance("n");
  for (int stage = 0; stage < 3; ++stage) {
    for (const char* who : {"a", "b"}) submit_for(who);
    EXPECT_EQ(code_of([&] { svc.advance("n"); }), "missing_submissions");
    submit_for("z");
    svc.advance("n");
  }
  EXPECT_EQ(svc.state("n")->workflow.stage, Stage::Final);
  auto out = svc.export_assignment("n");
  std::set<DocSet> got, want;
  for (const auto& g : out["groups"]) {
    auto v = g.get<std::vector<DocId>>();
    got.emplace(v.begin(), v.end());
  }
  for (const auto& g : corpus.truth->partition()) want.insert(g);
  EXPECT_EQ(got, want);
  EXPECT_EQ(code_of([&] { svc.advance("n"); }), "invalid_stage");
  EXPECT_EQ(code_of([&] { svc.submit_op("n", "a", Merge{"x", "y"}); }), "invalid_stage");
}
