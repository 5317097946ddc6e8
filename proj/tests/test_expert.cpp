#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "convpol/expert.hpp"
#include "helpers.hpp"

using namespace convpol;
using testutil::rand_record;
using testutil::record_from_ranks;

namespace {

// The two-turn conversation from the worked example: result reciprocal
// ranks 0.33 and 1.0, turn-1 question at rank 3.
ConversationRecord flip_record() {
    return record_from_ranks("flip", {3, 1}, {3, std::nullopt});
}

}  // namespace

TEST_CASE("enumerate_trajectories returns one trajectory per stop point") {
    const ConversationRecord one = record_from_ranks("one", {2}, {std::nullopt});
    const auto single = enumerate_trajectories(one);
    REQUIRE(single.size() == 1);
    CHECK(single[0].question_lists.empty());
    CHECK(single[0].stop_turn == 1);

    const ConversationRecord three = record_from_ranks("three", {5, 4, 1}, {1, 2, std::nullopt});
    const auto trajs = enumerate_trajectories(three);
    REQUIRE(trajs.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(trajs[i].stop_turn == i + 1);
        CHECK(trajs[i].question_lists.size() == static_cast<std::size_t>(i));
        CHECK(*trajs[i].final_result_list == three.turns[i].result_list);
    }
}

TEST_CASE("enumerate_trajectories matches a recursive enumeration oracle") {
    Rng rng(101);
    for (int trial = 0; trial < 100; ++trial) {
        const ConversationRecord record = rand_record(rng, "r" + std::to_string(trial));
        CHECK(enumerate_trajectories(record) == testutil::enumerate_oracle(record));
    }
}

TEST_CASE("the expert flips between alpha 0.5 and 0.7 on the worked example") {
    const ConversationRecord record = flip_record();
    const ExpertLabel at_05 = select_expert(record, {0.5});
    CHECK(at_05.stop_turn == 1);
    CHECK_THAT(at_05.ecrr_value, Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
    CHECK(at_05.alpha == 0.5);

    const ExpertLabel at_07 = select_expert(record, {0.7});
    CHECK(at_07.stop_turn == 2);
    CHECK_THAT(at_07.ecrr_value, Catch::Matchers::WithinAbs(0.343, 1e-12));
}

TEST_CASE("a rank-1 result at turn 1 is unbeatable below alpha 1") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        ConversationRecord record = rand_record(rng, "r");
        record.turns[0].result_list.relevant_rank = 1;
        const double alpha = rng.uniform(0.0, 0.999);
        const ExpertLabel label = select_expert(record, {alpha});
        CHECK(label.stop_turn == 1);
        CHECK(label.ecrr_value == 1.0);
    }
}

TEST_CASE("select_expert agrees with brute force and breaks ties early") {
    Rng rng(13);
    for (int trial = 0; trial < 300; ++trial) {
        const ConversationRecord record = rand_record(rng, "r");
        const double alpha = rng.uniform(0.0, 1.0);
        const auto trajs = enumerate_trajectories(record);
        int best = 0;
        double best_value = ecrr(trajs[0], {alpha});
        for (int i = 1; i < static_cast<int>(trajs.size()); ++i) {
            const double v = ecrr(trajs[i], {alpha});
            if (v > best_value) {  // strict: earliest stop wins ties
                best = i;
                best_value = v;
            }
        }
        const ExpertLabel label = select_expert(record, {alpha});
        CHECK(label.stop_turn == trajs[best].stop_turn);
        CHECK(label.ecrr_value == best_value);
    }
}

TEST_CASE("equal-ECRR stop points resolve to the earliest") {
    // alpha = 1 with a relevant question makes stop 1 and stop 2 tie exactly
    const ConversationRecord record = record_from_ranks("tie", {4, 4}, {1, std::nullopt});
    const ExpertLabel label = select_expert(record, {1.0});
    CHECK(label.ecrr_value == 0.25);
    CHECK(label.stop_turn == 1);
}

TEST_CASE("all-zero conversations fall back to stop turn 1") {
    // no relevant item anywhere: every stop point scores 0
    const ConversationRecord record = record_from_ranks(
        "zero", {std::nullopt, std::nullopt}, {std::nullopt, std::nullopt});
    const ExpertLabel label = select_expert(record, {0.7});
    CHECK(label.stop_turn == 1);
    CHECK(label.ecrr_value == 0.0);
}

TEST_CASE("expert demonstrations ask up to the stop turn") {
    const ConversationRecord record = record_from_ranks("r", {9, 8, 1}, {1, 1, std::nullopt});
    const auto pairs = expert_demonstrations(record, 3);
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].action == Action::AskQuestion);
    CHECK(pairs[1].action == Action::AskQuestion);
    CHECK(pairs[2].action == Action::ReturnResults);
    CHECK(pairs[1].state == extract_state_features(record, 2));

    const auto single = expert_demonstrations(record, 1);
    REQUIRE(single.size() == 1);
    CHECK(single[0].action == Action::ReturnResults);
}

TEST_CASE("build_expert_dataset sizes follow the selected stop turns") {
    const std::vector<ConversationRecord> records{flip_record()};
    CHECK(build_expert_dataset(records, {0.5}).size() == 1);  // stop 1: one RETURN pair
    CHECK(build_expert_dataset(records, {0.7}).size() == 2);  // stop 2: ASK then RETURN

    Rng rng(47);
    std::vector<ConversationRecord> pool;
    for (int i = 0; i < 30; ++i) pool.push_back(rand_record(rng, "p" + std::to_string(i)));
    std::size_t expected = 0;
    for (const auto& r : pool) expected += static_cast<std::size_t>(select_expert(r, {0.6}).stop_turn);
    CHECK(build_expert_dataset(pool, {0.6}).size() == expected);

    CHECK_THROWS_AS(build_expert_dataset({}, {0.5}), std::invalid_argument);
}

TEST_CASE("expert labels round-trip through JSON lines") {
    Rng rng(55);
    std::vector<ExpertLabel> labels;
    for (int i = 0; i < 25; ++i) {
        const ConversationRecord record = rand_record(rng, "r" + std::to_string(i));
        labels.push_back(select_expert(record, {0.7}));
    }
    const auto path = std::filesystem::temp_directory_path() / "convpol_expert_labels.jsonl";
    save_expert_labels(labels, path.string());
    CHECK(load_expert_labels(path.string()) == labels);
    std::filesystem::remove(path);
}
