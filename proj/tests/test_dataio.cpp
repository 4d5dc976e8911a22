#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "a2gnn/dataio.hpp"
#include "test_util.hpp"

using namespace a2gnn;

namespace {

dmat rotation_from_axis_angle(double ax, double ay, double az, double angle) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  ax /= n;
  ay /= n;
  az /= n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1 - c;
  dmat r(3, 3);
  r(0, 0) = t * ax * ax + c;
  r(0, 1) = t * ax * ay - s * az;
  r(0, 2) = t * ax * az + s * ay;
  r(1, 0) = t * ax * ay + s * az;
  r(1, 1) = t * ay * ay + c;
  r(1, 2) = t * ay * az - s * ax;
  r(2, 0) = t * ax * az - s * ay;
  r(2, 1) = t * ay * az + s * ax;
  r(2, 2) = t * az * az + c;
  return r;
}

// rows are joints, so rotating every joint by R means frames * R^T
SkeletonSequence rotate_sequence(SkeletonSequence seq, const dmat& r) {
  for (auto& f : seq.frames) f = matmul(f, transpose(r));
  return seq;
}

// four reference joints laid out axis-aligned: shoulders on x, spine on y
SkeletonSequence aligned_pose() {
  SkeletonSequence seq;
  seq.id = "aligned";
  seq.label = 0;
  dmat f(5, 3);
  f(0, 0) = -0.2; f(0, 1) = 1.45;  // right shoulder
  f(1, 0) = 0.2;  f(1, 1) = 1.45;  // left shoulder
  f(2, 1) = 1.0;                   // spine base
  f(3, 1) = 1.5;                   // spine
  f(4, 0) = 0.3;  f(4, 1) = 0.7; f(4, 2) = 0.4;  // some limb joint
  seq.frames.push_back(f);
  return seq;
}

}  // namespace

TEST_CASE("center_frames") {
  SECTION("single joint moves to the origin") {
    SkeletonSequence seq;
    dmat f(1, 3);
    f(0, 0) = 1;
    f(0, 1) = 2;
    f(0, 2) = 3;
    seq.frames.push_back(f);
    const auto centered = center_frames(seq);
    for (int d = 0; d < 3; ++d) CHECK(centered.frames[0](0, d) == 0.0);
  }
  SECTION("already centered pair is unchanged") {
    SkeletonSequence seq;
    dmat f(2, 3);
    f(0, 0) = 1;
    f(1, 0) = -1;
    seq.frames.push_back(f);
    const auto centered = center_frames(seq);
    CHECK(max_abs_diff(centered.frames[0], f) == 0.0);
  }
  SECTION("postcondition and idempotence on random sequences") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      SkeletonSequence seq;
      const int t = 1 + static_cast<int>(rng() % 6), n = 2 + static_cast<int>(rng() % 10);
      for (int i = 0; i < t; ++i) seq.frames.push_back(random_uniform<double>(rng, n, 3, -5, 5));
      const auto once = center_frames(seq);
      for (const auto& f : once.frames)
        for (int d = 0; d < 3; ++d) {
          double mean = 0;
          for (int i = 0; i < f.rows(); ++i) mean += f(i, d);
          CHECK(std::abs(mean / f.rows()) < 1e-12);
        }
      const auto twice = center_frames(once);
      for (int i = 0; i < t; ++i) CHECK(max_abs_diff(once.frames[i], twice.frames[i]) < 1e-12);
    }
  }
}

TEST_CASE("rotate_align") {
  const auto pose = aligned_pose();

  SECTION("aligned pose maps to itself") {
    const auto out = rotate_align(pose, 0, 1, 2, 3);
    CHECK(max_abs_diff(out.frames[0], pose.frames[0]) < 1e-12);
  }
  SECTION("recovers an aligned pose from a known rotation") {
    const dmat r = rotation_from_axis_angle(0.3, -0.8, 0.5, 1.2);
    const auto out = rotate_align(rotate_sequence(pose, r), 0, 1, 2, 3);
    CHECK(max_abs_diff(out.frames[0], pose.frames[0]) < 1e-9);
  }
  SECTION("commutes with any global rotation") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int trial = 0; trial < 10; ++trial) {
      SkeletonSequence seq = aligned_pose();
      // scatter the pose so it is not axis aligned to begin with
      seq = rotate_sequence(seq, rotation_from_axis_angle(u(rng), u(rng), u(rng) + 2, u(rng)));
      const dmat r = rotation_from_axis_angle(u(rng), u(rng) + 2, u(rng), 3 * u(rng));
      const auto direct = rotate_align(seq, 0, 1, 2, 3);
      const auto shuffled = rotate_align(rotate_sequence(seq, r), 0, 1, 2, 3);
      CHECK(max_abs_diff(direct.frames[0], shuffled.frames[0]) < 1e-8);
    }
  }
  SECTION("axes stay orthonormal with determinant +1") {
    // reading the rotation off the images of the basis via a probe frame
    std::mt19937_64 rng(11);
    SkeletonSequence seq = aligned_pose();
    seq = rotate_sequence(seq, rotation_from_axis_angle(1, 2, 3, 0.9));
    const auto out = rotate_align(seq, 0, 1, 2, 3);
    // shoulders must land on the x axis
    const auto& f = out.frames[0];
    CHECK(std::abs(f(1, 1) - f(0, 1)) < 1e-9);
    CHECK(std::abs(f(1, 2) - f(0, 2)) < 1e-9);
    CHECK(f(1, 0) > f(0, 0));  // right -> left points along +x
    // spine must lie in the xy plane pointing +y
    CHECK(std::abs(f(3, 2) - f(2, 2)) < 1e-9);
    CHECK(f(3, 1) > f(2, 1));
  }
  SECTION("degenerate pose rejected") {
    SkeletonSequence bad = aligned_pose();
    bad.frames[0](1, 0) = bad.frames[0](0, 0);  // shoulders coincide
    bad.frames[0](1, 1) = bad.frames[0](0, 1);
    CHECK_THROWS_WITH(rotate_align(bad, 0, 1, 2, 3), Catch::Matchers::ContainsSubstring("degenerate pose"));

    SkeletonSequence parallel = aligned_pose();
    parallel.frames[0](3, 0) = parallel.frames[0](2, 0) + 1.0;  // spine along shoulder axis
    parallel.frames[0](3, 1) = parallel.frames[0](2, 1);
    CHECK_THROWS_WITH(rotate_align(parallel, 0, 1, 2, 3), Catch::Matchers::ContainsSubstring("degenerate pose"));
  }
}

TEST_CASE("augment") {
  std::mt19937_64 rng(13);

  SECTION("T == segments with unit scale is the identity") {
    SkeletonSequence seq;
    for (int i = 0; i < 12; ++i) seq.frames.push_back(dmat::filled(4, 3, i));
    const auto out = augment(seq, 12, 1.0, 1.0, rng);
    REQUIRE(out.num_frames() == 12);
    for (int i = 0; i < 12; ++i) CHECK(out.frames[i](0, 0) == static_cast<double>(i));
  }
  SECTION("T=24 picks frame k from [2k, 2k+1]") {
    SkeletonSequence seq;
    for (int i = 0; i < 24; ++i) seq.frames.push_back(dmat::filled(2, 3, i));
    for (int rep = 0; rep < 10; ++rep) {
      const auto out = augment(seq, 12, 1.0, 1.0, rng);
      for (int k = 0; k < 12; ++k) {
        const int src = static_cast<int>(out.frames[k](0, 0));
        CHECK(src >= 2 * k);
        CHECK(src <= 2 * k + 1);
      }
    }
  }
  SECTION("every input length yields exactly `segments` ordered frames") {
    for (int t = 1; t <= 30; ++t) {
      SkeletonSequence seq;
      for (int i = 0; i < t; ++i) seq.frames.push_back(dmat::filled(2, 3, i));
      const auto out = augment(seq, 12, 0.98, 1.02, rng);
      REQUIRE(out.num_frames() == 12);
      double prev = -1;
      double factor = out.frames[0](0, 0) == 0.0 ? 1.0 : 1.0;  // frame value is i * factor
      for (int k = 0; k < 12; ++k) {
        const double v = out.frames[k](0, 0);
        CHECK(v >= prev - 1e-12);  // temporal order preserved
        prev = v;
      }
      (void)factor;
    }
  }
  SECTION("one scale factor for the whole sequence") {
    SkeletonSequence seq;
    for (int i = 1; i <= 12; ++i) seq.frames.push_back(dmat::filled(2, 3, i));
    const auto out = augment(seq, 12, 0.5, 0.5, rng);
    for (int k = 0; k < 12; ++k) CHECK(out.frames[k](0, 0) == Catch::Approx(0.5 * (k + 1)));
  }
}

TEST_CASE("synthetic generator") {
  std::mt19937_64 rng(17);

  SECTION("still class displacement is bounded by the noise amplitude") {
    auto seqs = synth_generate("still", 3, rng);
    const dmat base = synth::base_pose();
    for (const auto& seq : seqs)
      for (const auto& f : seq.frames)
        for (int i = 0; i < f.rows(); ++i)
          for (int d = 0; d < 3; ++d) CHECK(std::abs(f(i, d) - base(i, d)) <= synth::kNoiseAmplitude + 1e-12);
  }
  SECTION("wave_right moves the right wrist more than the left") {
    auto seqs = synth_generate("wave_right", 5, rng);
    for (const auto& seq : seqs) {
      double var_r = 0, var_l = 0, mean_r = 0, mean_l = 0;
      for (const auto& f : seq.frames) {
        mean_r += f(4, 0);
        mean_l += f(7, 0);
      }
      mean_r /= seq.num_frames();
      mean_l /= seq.num_frames();
      for (const auto& f : seq.frames) {
        var_r += (f(4, 0) - mean_r) * (f(4, 0) - mean_r);
        var_l += (f(7, 0) - mean_l) * (f(7, 0) - mean_l);
      }
      CHECK(var_r > var_l);
    }
  }
  SECTION("unknown class name lists the valid ones") {
    CHECK_THROWS_WITH(synth_generate("moonwalk", 1, rng), Catch::Matchers::ContainsSubstring("wave_left") &&
                                                              Catch::Matchers::ContainsSubstring("squat"));
  }
  SECTION("fixed seed reproduces the dataset byte for byte") {
    const Dataset a = make_synthetic_dataset(5, 99);
    const Dataset b = make_synthetic_dataset(5, 99);
    std::ostringstream sa, sb;
    save_jsonl(sa, a);
    save_jsonl(sb, b);
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
  }
  SECTION("stick figure is a connected 15-joint tree") {
    CHECK(synth::edges().size() == 14);
    CHECK(is_connected(15, synth::edges()));
  }
}

TEST_CASE("jsonl persistence") {
  SECTION("empty file loads as an empty dataset") {
    std::istringstream empty("");
    const Dataset ds = load_jsonl(empty);
    CHECK(ds.sequences.empty());
    CHECK(ds.manifest.classes.empty());
  }
  SECTION("round trip is the identity") {
    const Dataset ds = make_synthetic_dataset(3, 21);
    std::ostringstream out;
    save_jsonl(out, ds);
    std::istringstream in(out.str());
    const Dataset back = load_jsonl(in);
    REQUIRE(back.sequences.size() == ds.sequences.size());
    CHECK(back.manifest.classes == ds.manifest.classes);
    CHECK(back.manifest.joints == ds.manifest.joints);
    CHECK(back.manifest.edges == ds.manifest.edges);
    CHECK(back.manifest.split == ds.manifest.split);
    for (size_t i = 0; i < ds.sequences.size(); ++i) {
      CHECK(back.sequences[i].id == ds.sequences[i].id);
      CHECK(back.sequences[i].label == ds.sequences[i].label);
      REQUIRE(back.sequences[i].frames.size() == ds.sequences[i].frames.size());
      for (size_t t = 0; t < ds.sequences[i].frames.size(); ++t)
        CHECK(back.sequences[i].frames[t] == ds.sequences[i].frames[t]);  // exact
    }
  }
  SECTION("malformed line reports its number") {
    const Dataset ds = make_synthetic_dataset(1, 23);
    std::ostringstream out;
    save_jsonl(out, ds);
    std::string text = out.str();
    text += "{this is not json\n";
    std::istringstream in(text);
    CHECK_THROWS_WITH(load_jsonl(in), Catch::Matchers::ContainsSubstring("line 6"));
  }
  SECTION("duplicate edge rejected") {
    std::istringstream in(
        R"({"classes":["a","b"],"joints":["j0","j1"],"edges":[[0,1],[1,0]],"split":{}})"
        "\n");
    CHECK_THROWS_WITH(load_jsonl(in), Catch::Matchers::ContainsSubstring("duplicate edge"));
  }
  SECTION("label outside the class list rejected") {
    std::istringstream in(
        R"({"classes":["a"],"joints":["j0","j1"],"edges":[[0,1]],"split":{}})"
        "\n"
        R"({"id":"x","label":3,"frames":[[[0,0,0],[1,0,0]]]})"
        "\n");
    CHECK_THROWS_WITH(load_jsonl(in), Catch::Matchers::ContainsSubstring("label"));
  }
}

TEST_CASE("raw table adapter") {
  SECTION("reads one frame per row with coordinate mapping and scale") {
    std::istringstream in("# header\n1 2 3 4 5 6\n7 8 9 10 11 12\n");
    AdapterConfig cfg;
    cfg.num_joints = 2;
    cfg.coord_order = "xzy";  // file stores x, z, y
    cfg.scale = 0.5;
    cfg.skip_header_lines = 1;
    const auto seq = import_table(in, cfg);
    REQUIRE(seq.num_frames() == 2);
    CHECK(seq.frames[0](0, 0) == 0.5);   // x = 1 * 0.5
    CHECK(seq.frames[0](0, 2) == 1.0);   // z column came second
    CHECK(seq.frames[0](0, 1) == 1.5);   // y column came third
    CHECK(seq.frames[1](1, 0) == 5.0);
  }
  SECTION("short row rejected") {
    std::istringstream in("1 2 3\n");
    AdapterConfig cfg;
    cfg.num_joints = 2;
    CHECK_THROWS_WITH(import_table(in, cfg), Catch::Matchers::ContainsSubstring("line 1"));
  }
  SECTION("csv delimiter") {
    std::istringstream in("1,2,3\n");
    AdapterConfig cfg;
    cfg.num_joints = 1;
    cfg.delimiter = ',';
    const auto seq = import_table(in, cfg);
    CHECK(seq.frames[0](0, 1) == 2.0);
  }
}
