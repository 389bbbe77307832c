#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "overload/costmodel.hpp"
#include "overload/errors.hpp"
#include "overload/io.hpp"

using namespace overload;
using overload::io::json;

TEST(FormatNumber, RoundTrips) {
  for (double v : {0.0, 1.0, 0.1, 1e-9, 123456.789, -2.5e300}) EXPECT_EQ(std::stod(io::format_number(v)), v);
  for (float v : {0.99f, 0.25f, 1e-7f}) EXPECT_EQ(std::stof(io::format_number(v)), v);
  EXPECT_EQ(io::format_number(0.5), "0.5");
}

TEST(CandidatesCsv, RoundTrip) {
  for (auto sc : {Scenario::worst, Scenario::best, Scenario::random}) {
    const auto set = gen_synthetic(sc, 200, 3, 5);
    std::stringstream ss;
    io::write_candidates_csv(ss, set);
    const auto back = io::read_candidates_csv(ss);
    EXPECT_EQ(back.candidates, set.candidates);
  }
}

TEST(CandidatesCsv, EmptyAndErrors) {
  std::stringstream empty;
  EXPECT_EQ(io::read_candidates_csv(empty).size(), 0u);
  std::stringstream header_only("x1,y1,x2,y2,objectness,p_0\n");
  EXPECT_EQ(io::read_candidates_csv(header_only).size(), 0u);

  const char* bad[] = {
      "x1,y1,x2,y2,score,p_0\n0,0,1,1,0.5,0.5\n",       // header
      "x1,y1,x2,y2,objectness,p_0\n0,0,1,1,0.5\n",      // short row
      "x1,y1,x2,y2,objectness,p_0\n0,0,1,1,abc,0.5\n",  // number
      "x1,y1,x2,y2,objectness,p_0\n0,0,1,1,1.5,0.5\n",  // objectness range
      "x1,y1,x2,y2,objectness\n0,0,1,1,0.5\n",          // no classes
  };
  for (const char* text : bad) {
    std::stringstream ss(text);
    EXPECT_THROW(io::read_candidates_csv(ss), DataError) << text;
  }
}

TEST(Ovl1, RoundTripAndErrors) {
  const auto img = seeded_noise_image(3, 16, 24);
  std::stringstream ss;
  io::write_image(ss, img);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.size(), 20u + 16u * 24u * 3u * 4u);
  EXPECT_EQ(bytes.substr(0, 4), "OVL1");
  std::stringstream in(bytes);
  EXPECT_EQ(io::read_image(in), img);

  const auto expect_bad = [](std::string b) {
    std::stringstream s(b);
    EXPECT_THROW(io::read_image(s), DataError);
  };
  expect_bad("OVL2" + bytes.substr(4));
  expect_bad(bytes.substr(0, bytes.size() - 1));
  expect_bad(bytes + "x");
  std::string rank = bytes;
  rank[4] = 2;
  expect_bad(rank);
  std::string big = bytes;
  const float two = 2.0f;
  std::memcpy(big.data() + 20, &two, 4);
  expect_bad(big);
  expect_bad("");
}

TEST(ConfigJson, ApplyAndReject) {
  NmsConfig n;
  io::apply_json(json{{"t_iou", 0.7}, {"metric", "diou"}, {"timeout", nullptr}}, n);
  EXPECT_FLOAT_EQ(n.t_iou, 0.7f);
  EXPECT_EQ(n.metric, OverlapMetric::diou);
  EXPECT_FALSE(n.timeout.has_value());
  EXPECT_THROW(io::apply_json(json{{"tiou", 0.7}}, n), ConfigError);
  EXPECT_THROW(io::apply_json(json{{"t_iou", "high"}}, n), ConfigError);
  EXPECT_THROW(io::apply_json(json::array(), n), ConfigError);

  AttackConfig a;
  io::apply_json(json{{"steps", 7}, {"loss", "tanh"}, {"spatial_attention", false}}, a);
  EXPECT_EQ(a.steps, 7u);
  EXPECT_FALSE(a.spatial_attention);
  EXPECT_THROW(io::apply_json(json{{"step_mode", "adam"}}, a), ConfigError);

  SimConfig s;
  io::apply_json(json{{"adversarial_ratio", 0.5}, {"timeout", 0.25}}, s);
  EXPECT_EQ(s.adversarial_ratio, 0.5);
  EXPECT_EQ(*s.timeout, 0.25);
  EXPECT_THROW(io::apply_json(json{{"ratio", 0.5}}, s), ConfigError);
}

TEST(ConfigJson, ToJsonRoundTrip) {
  NmsConfig n;
  n.t_iou = 0.3f;
  n.metric = OverlapMetric::ciou;
  n.max_candidates = 500;
  NmsConfig n2;
  io::apply_json(io::to_json(n), n2);
  EXPECT_EQ(io::to_json(n2), io::to_json(n));

  AttackConfig a;
  a.eta = 0.01;
  a.step_mode = StepMode::raw;
  AttackConfig a2;
  io::apply_json(io::to_json(a), a2);
  EXPECT_EQ(io::to_json(a2), io::to_json(a));

  SimConfig s;
  s.closed_loop = false;
  s.timeout.reset();
  SimConfig s2;
  io::apply_json(io::to_json(s), s2);
  EXPECT_EQ(io::to_json(s2), io::to_json(s));

  const CostModelParams p{2e-9, Seconds(1.5e-3), 800};
  const auto q = io::cost_model_from_json(io::to_json(p));
  EXPECT_DOUBLE_EQ(q.alpha, p.alpha);
  EXPECT_NEAR(q.t_base.count(), p.t_base.count(), 1e-15);
  EXPECT_EQ(q.n_break, p.n_break);

  const auto w = init_weights(4, 3, 2.0);
  EXPECT_EQ(io::weights_from_json(io::to_json(w)), w);
  auto other = io::to_json(w);
  other["arch"] = "something-else";
  EXPECT_THROW(io::weights_from_json(other), DataError);
}

TEST(SamplesCsv, RoundTrip) {
  const std::vector<TimingSample> s{{10, Scenario::worst, Seconds(1.25e-5), 3}, {20000, Scenario::random, Seconds(0.7), 5}};
  std::stringstream ss;
  io::write_samples_csv(ss, s);
  const auto back = io::read_samples_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].n, s[i].n);
    EXPECT_EQ(back[i].scenario, s[i].scenario);
    EXPECT_DOUBLE_EQ(back[i].elapsed.count(), s[i].elapsed.count());
    EXPECT_EQ(back[i].repeats, s[i].repeats);
  }
}
