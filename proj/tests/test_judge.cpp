#include "doctest.h"

#include "careaqa/eval/judge.hpp"

using namespace careaqa::eval;
using namespace careaqa::gateway;

namespace {

JudgeSettings fast_settings(int retries = 2) {
    JudgeSettings s;
    s.parse_retries = retries;
    s.transport_policy.max_attempts = 1;
    s.transport_policy.rate_limit_rps = 1e6;
    return s;
}

}  // namespace

TEST_CASE("rendered judge prompt byte-equals the template with both substitutions") {
    const std::string expected =
        "Your job is to evaluate if the ground-truth and prediction are same/similar.\n"
        "\n"
        "Provide only Yes or No answer as JSON of the following structure:\n"
        "{'answer': ''} without any explanation.\n"
        "\n"
        "Ground-truth: crackles heard\n"
        "Prediction: inspiratory crackles detected";
    CHECK(render_judge_prompt("crackles heard", "inspiratory crackles detected") == expected);
}

TEST_CASE("two rendered prompts differ only in the substituted fields") {
    const std::string a = render_judge_prompt("gt-one", "pred");
    const std::string b = render_judge_prompt("gt-two", "pred");
    // Identical prefix up to the substitution point, identical suffix after.
    const size_t gt_pos = a.find("gt-one");
    REQUIRE(gt_pos != std::string::npos);
    CHECK(a.substr(0, gt_pos) == b.substr(0, gt_pos));
    CHECK(a.substr(gt_pos + 6) == b.substr(gt_pos + 6));
}

TEST_CASE("judge reply parsing accepts case and quote variants") {
    CHECK(parse_judge_reply(R"({"answer": "Yes"})") == true);
    CHECK(parse_judge_reply(R"({"answer": "yes"})") == true);
    CHECK(parse_judge_reply(R"({"answer": "NO"})") == false);
    CHECK(parse_judge_reply(R"({"Answer": "No."})") == false);
    CHECK(parse_judge_reply("{'answer': 'Yes'}") == true);
    CHECK(parse_judge_reply("Sure!\n{\"answer\": \"No\"}\nHope that helps.") == false);
    CHECK_FALSE(parse_judge_reply("I think they match.").has_value());
    CHECK_FALSE(parse_judge_reply(R"({"answer": "maybe"})").has_value());
}

TEST_CASE("judge accuracy is yes-count over total") {
    std::vector<MockTransport::Outcome> script;
    for (int i = 0; i < 10; ++i)
        script.push_back(MockTransport::ok(i < 7 ? R"({"answer": "Yes"})" : R"({"answer": "No"})"));
    auto gw = make_mock_gateway(script);
    std::vector<JudgePair> pairs;
    for (int i = 0; i < 10; ++i)
        pairs.push_back({"qa" + std::to_string(i), "gt", "pred"});
    const auto outcome = judge_accuracy(pairs, *gw, fast_settings());
    CHECK(outcome.accuracy == doctest::Approx(0.70).epsilon(1e-12));
    CHECK(outcome.log.size() == 10);
    CHECK(outcome.log[0].attempts == 1);
}

TEST_CASE("lowercase verdicts count as yes") {
    auto gw = make_mock_gateway({MockTransport::ok(R"({"answer": "yes"})")});
    const auto outcome = judge_accuracy({{"qa0", "gt", "pred"}}, *gw, fast_settings());
    CHECK(outcome.accuracy == 1.0);
    CHECK_FALSE(outcome.log[0].flagged);
}

TEST_CASE("unparseable replies retry, then score as no and get flagged") {
    auto gw = make_mock_gateway({
        MockTransport::ok("word salad"),
        MockTransport::ok("more words"),
        MockTransport::ok("still nothing"),
    });
    const auto outcome = judge_accuracy({{"qa0", "gt", "pred"}}, *gw, fast_settings(2));
    CHECK(outcome.accuracy == 0.0);
    REQUIRE(outcome.log.size() == 1);
    CHECK(outcome.log[0].flagged);
    CHECK(outcome.log[0].attempts == 3);
    CHECK_FALSE(outcome.log[0].yes);
}

TEST_CASE("a parseable retry rescues the verdict") {
    auto gw = make_mock_gateway({
        MockTransport::ok("hmm"),
        MockTransport::ok(R"({"answer": "Yes"})"),
    });
    const auto outcome = judge_accuracy({{"qa0", "gt", "pred"}}, *gw, fast_settings(2));
    CHECK(outcome.accuracy == 1.0);
    CHECK(outcome.log[0].attempts == 2);
    CHECK_FALSE(outcome.log[0].flagged);
}

TEST_CASE("gateway failures score as no and are flagged") {
    auto gw = make_mock_gateway({MockTransport::transient()});
    JudgeSettings settings = fast_settings();
    settings.transport_policy.max_attempts = 2;
    settings.transport_policy.base_delay_ms = 0;
    const auto outcome = judge_accuracy({{"qa0", "gt", "pred"}}, *gw, settings);
    CHECK(outcome.accuracy == 0.0);
    CHECK(outcome.log[0].flagged);
}
