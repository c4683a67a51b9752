#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include <jsplice/harness.hpp>

using namespace jsplice;
using namespace jsplice::bench;

namespace {

// A synthetic experiment: E(n) = 3 / n^2 exactly, so every rate is 2.
Experiment fake() {
  Experiment e;
  e.id = "fake";
  e.columns = {{"err"}, {"count", false}};
  e.n_default = {10, 20, 40, 80};
  e.n_cap = 40;
  e.params = {"scale"};
  e.published = {{"err", 20, 3.0 / 400, "Table 0"}};
  e.checks = {{Check::Kind::within_factor, "err", 20, 20, 1.01, "matches at 20"},
              {Check::Kind::rate_each, "err", 20, 80, 1.99, "second order"},
              {Check::Kind::rate_overall, "err", 10, 40, 1.99, "overall"},
              {Check::Kind::at_most, "err", 80, 80, 1.0, "beyond cap"},
              {Check::Kind::seconds_at_most, "", 0, 40, 100.0, "fast"}};
  e.run = [](const std::vector<int>& ns, const RunContext& ctx) {
    double s = param<double>(ctx, "scale", 1.0);
    std::vector<Row> rows;
    for (int n : ns) rows.push_back(Row{n, true, {s * 3.0 / (n * n), static_cast<double>(n)}, 0.001});
    return rows;
  };
  return e;
}

}  // namespace

TEST(Harness, RegistryIdsAreUnique) {
  std::set<std::string> ids;
  for (const auto& e : registry()) {
    EXPECT_TRUE(ids.insert(e.id).second) << e.id;
    EXPECT_FALSE(e.columns.empty());
    EXPECT_TRUE(std::is_sorted(e.n_default.begin(), e.n_default.end()));
    Table t;
    t.id = e.id;
    t.columns = e.columns;
    for (const auto& p : e.published) EXPECT_NO_THROW(t.column(p.column)) << e.id;
  }
  for (const char* id : {"ex3.1", "ex4.1", "ex4.2", "ex4.3", "ex4.4", "ex4.5", "ex5.1", "ex5.2", "ex5.3", "ex6.1", "ex6.2"})
    EXPECT_NO_THROW(find_experiment(id)) << id;
}

TEST(Harness, UnknownIdListsKnownOnes) {
  try {
    find_experiment("ex9.9");
    FAIL();
  } catch (const std::invalid_argument& e) {
    std::string m = e.what();
    EXPECT_NE(m.find("ex9.9"), std::string::npos);
    EXPECT_NE(m.find("ex4.1"), std::string::npos);
  }
}

TEST(Harness, RatesAndCap) {
  auto e = fake();
  auto t = run_experiment(e, {}, {});
  ASSERT_EQ(t.rows.size(), 4u);
  EXPECT_FALSE(t.rows[3].ran);
  EXPECT_NEAR(t.rate("err", 1), 2.0, 1e-12);
  EXPECT_TRUE(std::isnan(t.rate("err", 0)));
  EXPECT_TRUE(std::isnan(t.rate("err", 3)));
  EXPECT_TRUE(std::isnan(t.value("err", 80)));
  auto g = golden(e, t);
  ASSERT_EQ(g.size(), 5u);
  EXPECT_TRUE(g[0].evaluated && g[0].pass);
  EXPECT_TRUE(g[1].evaluated && g[1].pass);
  EXPECT_TRUE(g[2].evaluated && g[2].pass);
  EXPECT_FALSE(g[3].evaluated);
  EXPECT_TRUE(g[4].evaluated && g[4].pass);
}

TEST(Harness, GoldenFailsOffPublished) {
  auto e = fake();
  RunContext ctx;
  ctx.params = {{"scale", 1.5}};
  auto g = golden(e, run_experiment(e, {10, 20, 40}, ctx));
  EXPECT_TRUE(g[0].evaluated);
  EXPECT_FALSE(g[0].pass);
  EXPECT_TRUE(g[1].pass);
}

TEST(Harness, RejectsBadInput) {
  auto e = fake();
  EXPECT_THROW(run_experiment(e, {20, 10}, {}), std::invalid_argument);
  EXPECT_THROW(run_experiment(e, {10, 10}, {}), std::invalid_argument);
  RunContext ctx;
  ctx.params = {{"nope", 1}};
  EXPECT_THROW(run_experiment(e, {10}, ctx), std::invalid_argument);
}

TEST(Harness, CsvIsDeterministic) {
  auto e = fake();
  auto a = run_experiment(e, {}, {});
  auto b = run_experiment(e, {}, {});
  b.rows[0].seconds = 123.0;
  EXPECT_EQ(to_csv(e, a), to_csv(e, b));
  auto csv = to_csv(e, a);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,status,err,err_rate,err_published,count");
  EXPECT_NE(csv.find("80,not run"), std::string::npos);
  EXPECT_NE(csv.find("7.5000e-03"), std::string::npos);
  EXPECT_NE(timing_csv(b).find("10,123.000"), std::string::npos);
}

TEST(Harness, ShapesFromJson) {
  auto s = shape_from_json(json{{"kind", "circle"}, {"center", {0.1, 0.2}}, {"radius", 0.3}});
  ASSERT_TRUE(std::holds_alternative<Circle>(s));
  EXPECT_DOUBLE_EQ(std::get<Circle>(s).radius, 0.3);
  EXPECT_THROW(shape_from_json(json{{"kind", "torus"}}), std::invalid_argument);
}

TEST(Harness, SmallEllipticSweep) {
  const auto& e = find_experiment("ex4.1");
  auto t = run_experiment(e, {20, 40}, {});
  EXPECT_TRUE(t.rows[1].ran);
  double rel = t.value("linf", 40) / published_value(e, "linf", 40);
  EXPECT_GT(rel, 0.25);
  EXPECT_LT(rel, 4.0);
}
