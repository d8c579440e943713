#include <doctest.h>

#include "cfmad/core.hpp"

using namespace cfmad;

namespace {

Question sample_question() {
  Question q;
  q.id = "q1";
  q.task_kind = TaskKind::multi_choice;
  q.context = "a short story";
  q.query = "what happened?";
  q.options = {{"A", "nothing"}, {"B", "something"}};
  q.gold_label = "B";
  return q;
}

}  // namespace

TEST_CASE("trim strips surrounding whitespace only") {
  CHECK(trim("  hello  ") == "hello");
  CHECK(trim("\t\r\n x \n") == "x");
  CHECK(trim("inner  space") == "inner  space");
  CHECK(trim("") == "");
  CHECK(trim("   ") == "");
}

TEST_CASE("lowercase folds ASCII letters") {
  CHECK(lowercase("TrUe") == "true");
  CHECK(lowercase("ABC-123") == "abc-123");
  CHECK(lowercase("") == "");
}

TEST_CASE("normalize_label canonicalizes true/false words") {
  CHECK(normalize_label("true") == "True");
  CHECK(normalize_label(" FALSE ") == "False");
  CHECK(normalize_label("TRUE") == "True");
  CHECK(normalize_label("A") == "A");
  CHECK(normalize_label(" B ") == "B");
  CHECK(normalize_label("truth") == "truth");
}

TEST_CASE("labels_equal compares normalized forms") {
  CHECK(labels_equal("true", "True"));
  CHECK(labels_equal("FALSE", "false"));
  CHECK_FALSE(labels_equal("True", "False"));
  CHECK(labels_equal("A", "A"));
  CHECK_FALSE(labels_equal("a", "A"));  // option letters stay case-sensitive
  CHECK_FALSE(labels_equal(kUnparsed, "True"));
}

TEST_CASE("task kind round trips through strings") {
  for (TaskKind kind : {TaskKind::fact_check, TaskKind::boolean_qa, TaskKind::multi_choice,
                        TaskKind::open_ended}) {
    CHECK(task_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(task_kind_from_string("riddle"), Error);
}

TEST_CASE("is_binary covers fact check and boolean QA") {
  CHECK(is_binary(TaskKind::fact_check));
  CHECK(is_binary(TaskKind::boolean_qa));
  CHECK_FALSE(is_binary(TaskKind::multi_choice));
  CHECK_FALSE(is_binary(TaskKind::open_ended));
}

TEST_CASE("candidate origin and debate role round trip") {
  for (CandidateOrigin o : {CandidateOrigin::dataset_option, CandidateOrigin::cot_majority,
                            CandidateOrigin::random_fill, CandidateOrigin::sampled_open_ended}) {
    CHECK(candidate_origin_from_string(to_string(o)) == o);
  }
  for (DebateRole r : {DebateRole::abducting_agent, DebateRole::critic, DebateRole::judge}) {
    CHECK(debate_role_from_string(to_string(r)) == r);
  }
  CHECK_THROWS_AS(candidate_origin_from_string("guess"), Error);
  CHECK_THROWS_AS(debate_role_from_string("moderator"), Error);
}

TEST_CASE("question helpers find options by label") {
  const Question q = sample_question();
  CHECK(q.option_labels() == std::vector<std::string>{"A", "B"});
  REQUIRE(q.find_option("B") != nullptr);
  CHECK(q.find_option("B")->text == "something");
  CHECK(q.find_option("Z") == nullptr);
}

TEST_CASE("validate_question flags structural problems") {
  SUBCASE("well formed multi-choice") {
    CHECK(validate_question(sample_question()).empty());
  }
  SUBCASE("gold label missing from options") {
    Question q = sample_question();
    q.gold_label = "C";
    const auto violations = validate_question(q);
    REQUIRE(violations.size() == 1);
    CHECK(violations[0].find("gold_label") != std::string::npos);
  }
  SUBCASE("duplicate option labels") {
    Question q = sample_question();
    q.options.push_back({"A", "again"});
    CHECK_FALSE(validate_question(q).empty());
  }
  SUBCASE("binary tasks need exactly True and False") {
    Question q;
    q.id = "c1";
    q.task_kind = TaskKind::fact_check;
    q.query = "claim";
    q.options = {{"Yes", "Yes"}, {"No", "No"}};
    q.gold_label = "Yes";
    CHECK_FALSE(validate_question(q).empty());
    q.options = {{kTrueLabel, kTrueLabel}, {kFalseLabel, kFalseLabel}};
    q.gold_label = kTrueLabel;
    CHECK(validate_question(q).empty());
  }
  SUBCASE("open-ended items carry no options") {
    Question q;
    q.id = "o1";
    q.task_kind = TaskKind::open_ended;
    q.query = "how many?";
    q.gold_label = "42";
    CHECK(validate_question(q).empty());
  }
}

TEST_CASE("question JSON round trip preserves every field") {
  Question q = sample_question();
  q.num_hops = 3;
  const Question back = question_from_json(to_json(q));
  CHECK(back == q);
}

TEST_CASE("question JSON omits num_hops when absent") {
  const Json j = to_json(sample_question());
  CHECK_FALSE(j.at("meta").contains("num_hops"));
  CHECK(question_from_json(j) == sample_question());
}

TEST_CASE("sampling config round trips with and without seed") {
  SamplingConfig s;
  s.temperature = 1.0;
  s.prompt_variant = "cot";
  CHECK(sampling_from_json(to_json(s)) == s);
  s.seed = 12345;
  CHECK(sampling_from_json(to_json(s)) == s);
}

TEST_CASE("debate transcript round trips") {
  DebateTranscript t;
  t.stance = {"A", "ocean", CandidateOrigin::cot_majority};
  t.abduction = {t.stance, "because water", "ex-1"};
  t.turns = {{DebateRole::critic, 1, "doubt it", "ex-2"},
             {DebateRole::abducting_agent, 1, "still water", "ex-3"}};
  CHECK(debate_transcript_from_json(to_json(t)) == t);
}

TEST_CASE("judgment round trips") {
  const Judgment j{"A", "The correct answer is Option A.", "option_letter"};
  CHECK(judgment_from_json(to_json(j)) == j);
}

TEST_CASE("run record round trips including intermediates") {
  RunRecord r;
  r.question_id = "q1";
  r.method = "cfmad";
  r.prediction = "A";
  r.gold = "B";
  r.exchange_ids = {"e1", "e2"};
  r.prompts_used = 2;
  r.tokens_in = 100;
  r.tokens_out = 40;
  r.wall_ms = 12;
  r.intermediates = Json{{"stance_labels", Json::array({"A", "B"})}};
  const RunRecord back = run_record_from_json(to_json(r));
  CHECK(back.question_id == r.question_id);
  CHECK(back.method == r.method);
  CHECK(back.prediction == r.prediction);
  CHECK(back.gold == r.gold);
  CHECK(back.exchange_ids == r.exchange_ids);
  CHECK(back.prompts_used == r.prompts_used);
  CHECK(back.tokens_in == r.tokens_in);
  CHECK(back.tokens_out == r.tokens_out);
  CHECK(back.wall_ms == r.wall_ms);
  CHECK(back.intermediates == r.intermediates);
}

TEST_CASE("schema error keeps where and field") {
  const SchemaError e("file.jsonl:3", "label", "unknown value");
  CHECK(e.where() == "file.jsonl:3");
  CHECK(e.field() == "label");
  CHECK(std::string(e.what()).find("file.jsonl:3") != std::string::npos);
  CHECK(std::string(e.what()).find("label") != std::string::npos);
}
