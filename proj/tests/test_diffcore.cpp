#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "a2gnn/gradcheck.hpp"
#include "a2gnn/matrix.hpp"
#include "a2gnn/params.hpp"
#include "a2gnn/tape.hpp"

using namespace a2gnn;

namespace {

ParamStore<double> random_store(std::initializer_list<std::tuple<const char*, int, int, double, double>> specs,
                                uint64_t seed) {
  ParamStore<double> store(seed);
  std::mt19937_64 rng(seed);
  for (const auto& [name, r, c, lo, hi] : specs) store.create(name, random_uniform<double>(rng, r, c, lo, hi));
  return store;
}

void check_primitive(ParamStore<double>& store, const LossBuilder<double>& builder) {
  const auto report = gradcheck<double>(store, builder, 1e-5, 1e-6, 1e-10);
  for (const auto& row : report.rows) {
    INFO(row.name << " max_abs_diff=" << row.max_abs_diff << " max_rel=" << row.max_rel);
    CHECK(row.pass);
  }
  CHECK(report.all_pass);
}

}  // namespace

TEST_CASE("forward spot values") {
  Tape<double> tape;
  dmat row = dmat::filled(1, 4, 3.7);
  auto* sm = tape.softmax_rows(tape.constant(row));
  for (int j = 0; j < 4; ++j) CHECK(sm->val()(0, j) == Catch::Approx(0.25));

  auto* sg = tape.sigmoid(tape.constant(dmat(1, 1)));
  CHECK(sg->val()(0, 0) == 0.5);
  auto* th = tape.tanh(tape.constant(dmat(1, 1)));
  CHECK(th->val()(0, 0) == 0.0);
}

TEST_CASE("softmax subtracts the row max before exponentiation") {
  Tape<double> tape;
  dmat big(1, 3);
  big(0, 0) = 1000.0;
  big(0, 1) = 1000.0;
  big(0, 2) = 999.0;
  auto* sm = tape.softmax_rows(tape.constant(big));
  CHECK(sm->val().all_finite());
  CHECK(sm->val()(0, 0) + sm->val()(0, 1) + sm->val()(0, 2) == Catch::Approx(1.0));
}

TEST_CASE("primitive gradients match finite differences") {
  SECTION("matmul") {
    auto store = random_store({{"a", 3, 4, -1, 1}, {"b", 4, 2, -1, 1}}, 1);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      return t.sum_all(t.matmul(b.bind(t, store.entries()[0]), b.bind(t, store.entries()[1])));
    });
  }
  SECTION("add and sub") {
    auto store = random_store({{"a", 3, 4, -1, 1}, {"b", 3, 4, -1, 1}}, 2);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      auto* x = b.bind(t, store.entries()[0]);
      auto* y = b.bind(t, store.entries()[1]);
      return t.sum_all(t.hadamard(t.add(x, y), t.sub(x, y)));
    });
  }
  SECTION("add_broadcast_row") {
    auto store = random_store({{"a", 3, 4, -1, 1}, {"b", 1, 4, -1, 1}}, 3);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      return t.sum_all(
          t.tanh(t.add_broadcast_row(b.bind(t, store.entries()[0]), b.bind(t, store.entries()[1]))));
    });
  }
  SECTION("elementwise nonlinearities") {
    auto store = random_store({{"a", 3, 4, -2, 2}}, 4);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      auto* x = b.bind(t, store.entries()[0]);
      return t.sum_all(t.add(t.tanh(x), t.sigmoid(x)));
    });
  }
  SECTION("log rsqrt reciprocal on positive input") {
    auto store = random_store({{"a", 3, 4, 0.5, 2.0}}, 5);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      auto* x = b.bind(t, store.entries()[0]);
      return t.sum_all(t.add(t.log(x), t.add(t.rsqrt(x), t.reciprocal(x))));
    });
  }
  SECTION("softmax_rows") {
    auto store = random_store({{"a", 3, 5, -2, 2}}, 6);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      auto* sm = t.softmax_rows(b.bind(t, store.entries()[0]));
      return t.sum_all(t.hadamard(sm, sm));  // nonuniform upstream gradient
    });
  }
  SECTION("transpose reshape concat select mean") {
    auto store = random_store({{"a", 3, 4, -1, 1}, {"b", 3, 2, -1, 1}}, 7);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      auto* x = b.bind(t, store.entries()[0]);
      auto* y = b.bind(t, store.entries()[1]);
      auto* cat = t.concat_cols({x, y});                  // 3x6
      auto* tr = t.transpose(cat);                        // 6x3
      auto* rs = t.reshape(tr, 3, 6);                     // mixes entries
      auto* mr = t.mean_rows(rs);                         // 1x6
      auto* sr = t.select_row(rs, 1);                     // 1x6
      auto* se = t.select_element(rs, 2, 3);              // 1x1
      return t.add(t.sum_all(t.hadamard(mr, sr)), se);
    });
  }
  SECTION("scale and mul_scalar") {
    auto store = random_store({{"a", 3, 4, -1, 1}, {"s", 1, 1, 0.5, 1.5}}, 8);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      auto* x = b.bind(t, store.entries()[0]);
      auto* s = b.bind(t, store.entries()[1]);
      return t.sum_all(t.mul_scalar(t.scale(x, 1.7), s));
    });
  }
  SECTION("lambda_max of a symmetrized parameter") {
    auto store = random_store({{"a", 5, 5, -1, 1}}, 9);
    check_primitive(store, [&](Tape<double>& t, Bindings<double>& b) {
      auto* x = b.bind(t, store.entries()[0]);
      auto* sym = t.scale(t.add(x, t.transpose(x)), 0.5);
      return t.lambda_max(sym);
    });
  }
}

TEST_CASE("backward semantics") {
  SECTION("sum of a parameter gives all-ones gradient") {
    ParamStore<double> store(0);
    store.create("p", dmat::filled(2, 3, 0.25));
    Tape<double> t;
    auto* p = t.param(&store.get("p"));
    t.backward(t.sum_all(p));
    REQUIRE(p->grad_live);
    CHECK(max_abs_diff(p->grad, dmat::filled(2, 3, 1.0)) == 0.0);
  }
  SECTION("zero-scaled loss gives zero gradient") {
    ParamStore<double> store(0);
    store.create("p", dmat::filled(2, 3, 0.25));
    Tape<double> t;
    auto* p = t.param(&store.get("p"));
    t.backward(t.scale(t.sum_all(p), 0.0));
    CHECK(max_abs(p->grad) == 0.0);
  }
  SECTION("non-scalar loss rejected") {
    ParamStore<double> store(0);
    store.create("p", dmat::filled(2, 3, 0.25));
    Tape<double> t;
    auto* p = t.param(&store.get("p"));
    CHECK_THROWS_WITH(t.backward(p), Catch::Matchers::ContainsSubstring("scalar"));
  }
  SECTION("shape mismatch names both shapes") {
    Tape<double> t;
    auto* a = t.constant(dmat(3, 4));
    auto* b = t.constant(dmat(5, 2));
    CHECK_THROWS_WITH(t.matmul(a, b), Catch::Matchers::ContainsSubstring("3x4") &&
                                          Catch::Matchers::ContainsSubstring("5x2"));
  }
  SECTION("repeated backward accumulates leaf gradients") {
    ParamStore<double> store(0);
    store.create("p", dmat::filled(2, 2, 0.5));
    Tape<double> t;
    auto* p = t.param(&store.get("p"));
    auto* loss = t.sum_all(t.hadamard(p, p));
    t.backward(loss);
    const dmat once = p->grad;
    t.backward(loss);
    CHECK(max_abs_diff(p->grad, scale(once, 2.0)) < 1e-15);
  }
  SECTION("constants never receive gradients") {
    ParamStore<double> store(0);
    store.create("p", dmat::filled(2, 2, 0.5));
    Tape<double> t;
    auto* p = t.param(&store.get("p"));
    auto* c = t.constant(dmat::filled(2, 2, 3.0));
    t.backward(t.sum_all(t.hadamard(p, c)));
    CHECK_FALSE(c->grad_live);
    CHECK(c->grad.empty());
  }
}

TEST_CASE("gradient linearity") {
  ParamStore<double> store(0);
  std::mt19937_64 rng(31);
  store.create("p", random_uniform<double>(rng, 3, 3, -1, 1));

  auto grad_of = [&](double a, double b) {
    Tape<double> t;
    auto* p = t.param(&store.get("p"));
    auto* l1 = t.sum_all(t.hadamard(p, p));
    auto* l2 = t.sum_all(t.tanh(p));
    t.backward(t.add(t.scale(l1, a), t.scale(l2, b)));
    return p->grad;
  };

  const dmat g1 = grad_of(1.0, 0.0);
  const dmat g2 = grad_of(0.0, 1.0);
  const dmat mix = grad_of(2.5, -0.75);
  dmat expect = add(scale(g1, 2.5), scale(g2, -0.75));
  CHECK(max_abs_diff(mix, expect) < 1e-10);
}

TEST_CASE("gradcheck harness") {
  SECTION("quadratic") {
    ParamStore<double> store(0);
    std::mt19937_64 rng(33);
    store.create("p", random_uniform<double>(rng, 3, 4, -1, 1));
    auto report = gradcheck<double>(
        store,
        [&](Tape<double>& t, Bindings<double>& b) {
          auto* p = b.bind(t, store.entries()[0]);
          return t.sum_all(t.hadamard(p, p));
        },
        1e-5, 1e-6, 0.0);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].max_rel < 1e-8);
    CHECK(report.all_pass);
  }
  SECTION("degenerate step rejected") {
    ParamStore<double> store(0);
    store.create("p", dmat::filled(1, 1, 1.0));
    CHECK_THROWS_WITH(gradcheck<double>(
                          store,
                          [&](Tape<double>& t, Bindings<double>& b) {
                            return t.sum_all(b.bind(t, store.entries()[0]));
                          },
                          0.0, 1e-4),
                      Catch::Matchers::ContainsSubstring("degenerate step"));
  }
  SECTION("zero tolerance fails") {
    ParamStore<double> store(0);
    std::mt19937_64 rng(35);
    store.create("p", random_uniform<double>(rng, 2, 2, -1, 1));
    auto report = gradcheck<double>(
        store,
        [&](Tape<double>& t, Bindings<double>& b) {
          auto* p = b.bind(t, store.entries()[0]);
          return t.sum_all(t.tanh(t.hadamard(p, p)));
        },
        1e-5, 0.0, 0.0);
    CHECK_FALSE(report.all_pass);
  }
}

TEST_CASE("float tape runs and roughly agrees with double") {
  ParamStore<float> store(0);
  std::mt19937_64 rng(41);
  store.create("p", random_uniform<float>(rng, 3, 3, -1.0f, 1.0f));
  Tape<float> t;
  auto* p = t.param(&store.get("p"));
  auto* loss = t.sum_all(t.sigmoid(t.matmul(p, t.transpose(p))));
  t.backward(loss);
  CHECK(p->grad_live);
  CHECK(p->grad.all_finite());

  ParamStore<double> dstore(0);
  dstore.create("p", store.get("p").cast<double>());
  Tape<double> td;
  auto* pd = td.param(&dstore.get("p"));
  auto* lossd = td.sum_all(td.sigmoid(td.matmul(pd, td.transpose(pd))));
  CHECK(std::abs(static_cast<double>(loss->val()(0, 0)) - lossd->val()(0, 0)) < 1e-5);
}
