#include <set>

#include "doctest.h"
#include "omegaprm/answer.hpp"
#include "omegaprm/core.hpp"
#include "omegaprm/errors.hpp"

using namespace omegaprm;

TEST_CASE("whitespace tokenizer counts runs of non-space") {
  CHECK(whitespace_token_count("") == 0);
  CHECK(whitespace_token_count("   ") == 0);
  CHECK(whitespace_token_count("3 + 4 = 7") == 5);
  CHECK(whitespace_token_count("  a\tb\n c ") == 3);
  CHECK(char_quarter_token_count("abcde") == 2);
  CHECK(char_quarter_token_count("") == 0);
}

TEST_CASE("state transition appends the action") {
  State s = State::root("q");
  CHECK(s.is_root());
  StepSeq a{Step::make("1 + 1 = 2"), Step::make("2 + 3 = 5")};
  State t = state_transition(s, a);
  REQUIRE(t.prefix.size() == 2);
  CHECK(t.prefix[1].text == "2 + 3 = 5");
  CHECK(t.prefix_tokens() == 10);
  CHECK(t.question_id == "q");
  CHECK_THROWS_AS(state_transition(t, StepSeq{}), InvalidAction);
  // Different step boundaries are different states.
  State u = state_transition(s, StepSeq{Step::make("1 + 1 = 2\n2 + 3 = 5")});
  CHECK(u.key() != t.key());
}

TEST_CASE("question validation") {
  CHECK_NOTHROW(validate(Question{"a", "s", "1"}));
  CHECK_THROWS_AS(validate(Question{"", "s", "1"}), Error);
  CHECK_THROWS_AS(validate(Question{"a", "s", ""}), Error);
}

TEST_CASE("MC estimate is an exact fraction") {
  auto r = [](bool ok) { return Rollout::make({Step::make("x")}, ok ? "1" : "2", ok); };
  std::vector<Rollout> v{r(true), r(true), r(false)};
  McEstimate m = McEstimate::count(v);
  CHECK(m.correct == 2);
  CHECK(m.total == 3);
  CHECK(m.value() == doctest::Approx(2.0 / 3.0));
  CHECK(m.is_mixed());
  std::vector<Rollout> z(8, r(false)), o(8, r(true));
  CHECK(McEstimate::count(z).is_zero());
  CHECK(McEstimate::count(z).value() == 0.0);
  CHECK(McEstimate::count(o).is_one());
  CHECK(McEstimate::count(o).value() == 1.0);
  CHECK_FALSE(McEstimate{}.is_zero());
}

TEST_CASE("engine config defaults and validation") {
  EngineConfig c;
  CHECK(c.alpha == 0.5);
  CHECK(c.beta == 0.9);
  CHECK(c.len_scale == 500);
  CHECK(c.c_puct == 0.125);
  CHECK(c.k_rollouts == 8);
  CHECK(c.search_limit == 100);
  CHECK(c.step_split_target == 16);
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mut) {
    EngineConfig e;
    mut(e);
    CHECK_THROWS_AS(e.validate(), InvalidConfig);
  };
  bad([](EngineConfig& e) { e.alpha = 0; });
  bad([](EngineConfig& e) { e.alpha = 1.5; });
  bad([](EngineConfig& e) { e.beta = -1; });
  bad([](EngineConfig& e) { e.len_scale = 0; });
  bad([](EngineConfig& e) { e.c_puct = -0.1; });
  bad([](EngineConfig& e) { e.k_rollouts = 0; });
  bad([](EngineConfig& e) { e.search_limit = 0; });
  bad([](EngineConfig& e) { e.step_split_target = 0; });
}

TEST_CASE("rng streams are reproducible and in range") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
  Rng r(7);
  std::set<std::int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    auto k = r.uniform_int(-2, 2);
    CHECK(k >= -2);
    CHECK(k <= 2);
    seen.insert(k);
    CHECK(r.index(3) < 3);
  }
  CHECK(seen.size() == 5);
  // Known first output of SplitMix64 from seed 0.
  Rng z(0);
  CHECK(z.next_u64() == 0xe220a8397b1dcdafULL);
}

TEST_CASE("rng bernoulli frequency") {
  Rng r(99);
  int hits = 0;
  for (int i = 0; i < 20000; ++i) hits += r.bernoulli(0.3);
  CHECK(hits / 20000.0 == doctest::Approx(0.3).epsilon(0.05));
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("final answer extraction") {
  CHECK(extract_final_answer("so \\boxed{42} done") == "42");
  CHECK(extract_final_answer("\\boxed{1} then \\boxed{\\frac{1}{2}}") == "\\frac{1}{2}");
  CHECK(extract_final_answer("step\nThe answer is 17.") == "17");
  CHECK(extract_final_answer("The answer is $-3$.") == "-3");
  CHECK(extract_final_answer("we get 3 then 1,234") == "1,234");
  CHECK(extract_final_answer("no digits here") == "");
  CHECK(extract_final_answer("") == "");
}

TEST_CASE("answer equivalence") {
  CHECK(answers_equivalent("1,234", "1234"));
  CHECK(answers_equivalent("\\frac{1}{2}", "0.5"));
  CHECK(answers_equivalent("\\dfrac{3}{4}", "3/4"));
  CHECK(answers_equivalent(" 7. ", "7"));
  CHECK(answers_equivalent("$5$", "5.0"));
  CHECK(answers_equivalent("x+1", "x + 1"));
  CHECK_FALSE(answers_equivalent("7", "8"));
  CHECK_FALSE(answers_equivalent("", ""));
  CHECK(parse_number("inf") == std::nullopt);
  CHECK(parse_number("2/4").value() == 0.5);
}

TEST_CASE("rollout text key distinguishes steps and answer") {
  Rollout a = Rollout::make({Step::make("1 + 1 = 2")}, "2", true);
  Rollout b = Rollout::make({Step::make("1 + 1 = 2")}, "3", false);
  Rollout c = Rollout::make({Step::make("1 + 1 = 2")}, "2", true);
  CHECK(a.text_key() != b.text_key());
  CHECK(a.text_key() == c.text_key());
  CHECK(a.token_len == 5);
}
