#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <thread>

#include <httplib.h>

#include "stylesel/errors.hpp"
#include "stylesel/gateway.hpp"
#include "test_support.hpp"

using namespace stylesel;

namespace {

Selector fixture_mock_selector() {
    SelectorConfig cfg;
    cfg.backend_kind = BackendKind::Mock;
    cfg.mock_mapping = testsup::fixture_mock_mapping();
    return Selector(cfg);
}

LatentBank fixture_bank() {
    return load_latent_bank(testsup::data_dir() / "fixture_latents.json");
}

}  // namespace

TEST_CASE("orchestrate assembles the full request") {
    auto dict = testsup::fixture_dictionary();
    auto bank = fixture_bank();
    auto selector = fixture_mock_selector();

    StylePrompt prompt{PromptKind::StyleSelection, "Bragging proudly about himself."};
    auto request = orchestrate(prompt, "Mom, I got A+ in the final test!", dict, bank, selector,
                               /*seed=*/7);
    CHECK(request.retrieval.description == "In a triumphant, proud tone");
    CHECK(request.reference_id == "u004");
    CHECK(request.text == "Mom, I got A+ in the final test!");
    CHECK(request.latent.size() == 8);
    CHECK(request.duration_scale == 1.0);  // entry 4 has no mean duration

    // same seed, same bytes
    auto again = orchestrate(prompt, "Mom, I got A+ in the final test!", dict, bank, selector, 7);
    CHECK(request == again);
    auto other = orchestrate(prompt, "Mom, I got A+ in the final test!", dict, bank, selector, 8);
    CHECK(request.latent != other.latent);
}

TEST_CASE("zero-noise override returns mu of the selected reference") {
    auto dict = testsup::fixture_dictionary();
    auto bank = fixture_bank();
    auto selector = fixture_mock_selector();

    StylePrompt prompt{PromptKind::StyleSelection, "I whispered conspiracy."};
    auto request = orchestrate(prompt, "Shh, we should sneak through the room.", dict, bank,
                               selector, 0, {}, std::vector<double>(8, 0.0));
    CHECK(request.retrieval.index == 2);
    CHECK(request.latent == bank.specs.at("u002").mu);
    // entry 2: 0.16 / 0.12
    CHECK(request.duration_scale == doctest::Approx(0.16 / 0.12).epsilon(1e-12));
}

TEST_CASE("duration scale honours the clamp") {
    auto dict = make_dictionary({{1, "very slow drawl", "u001", 1.2}}, 0.1);
    auto bank = fixture_bank();
    SelectorConfig cfg;
    cfg.backend_kind = BackendKind::Mock;
    cfg.mock_mapping = {{"slow", 1}};
    Selector selector(cfg);
    auto request = orchestrate({PromptKind::StyleSelection, "slow"}, "hello", dict, bank,
                               selector, 0, DurationClamp{0.25, 4.0});
    CHECK(request.duration_scale == 4.0);  // raw ratio would be 12
}

TEST_CASE("missing latent entry names the reference id") {
    auto dict = make_dictionary({{1, "lonely style", "missing-ref", std::nullopt}});
    auto bank = fixture_bank();
    SelectorConfig cfg;
    cfg.backend_kind = BackendKind::Mock;
    cfg.mock_mapping = {{"lonely style", 1}};
    Selector selector(cfg);
    try {
        orchestrate({PromptKind::StyleSelection, "lonely style"}, "hello", dict, bank, selector, 0);
        FAIL("expected ValidationError");
    } catch (const ValidationError& ex) {
        CHECK(std::string(ex.what()).find("missing-ref") != std::string::npos);
    }
}

TEST_CASE("orchestrate preconditions") {
    auto dict = testsup::fixture_dictionary();
    auto bank = fixture_bank();
    auto selector = fixture_mock_selector();
    AnnotationDictionary empty;
    CHECK_THROWS_AS(orchestrate({PromptKind::StyleSelection, "x"}, "text", empty, bank,
                                selector, 0),
                    ValidationError);
    CHECK_THROWS_AS(orchestrate({PromptKind::StyleSelection, "x"}, "  ", dict, bank, selector, 0),
                    ValidationError);
    // inference prompts must carry the synthesis text itself
    CHECK_THROWS_AS(orchestrate({PromptKind::StyleInference, "a"}, "b", dict, bank, selector, 0),
                    ValidationError);
}

TEST_CASE("stub dispatch journals first and hands out increasing ids") {
    testsup::TempDir tmp;
    auto dict = testsup::fixture_dictionary();
    auto bank = fixture_bank();
    auto selector = fixture_mock_selector();
    auto request = orchestrate({PromptKind::StyleInference, "Too late, my days are numbered."},
                               "Too late, my days are numbered.", dict, bank, selector, 3);

    RequestJournal journal(tmp.file("journal.jsonl"));
    StubSynthesisBackend stub;
    auto r1 = dispatch(request, stub, journal);
    auto r2 = dispatch(request, stub, journal);
    CHECK(r1.job_id == "stub-1");
    CHECK(r2.job_id == "stub-2");
    CHECK(stub.log().size() == 2);

    auto replayed = RequestJournal::replay(tmp.file("journal.jsonl"));
    REQUIRE(replayed.size() == 2);
    CHECK(replayed[0] == request);
    // replayed entries rebuild byte-identical wire payloads
    CHECK(synthesis_wire_payload(replayed[0]).dump() ==
          synthesis_wire_payload(request).dump());
}

TEST_CASE("journal survives a failed HTTP dispatch") {
    testsup::TempDir tmp;
    auto dict = testsup::fixture_dictionary();
    auto bank = fixture_bank();
    auto selector = fixture_mock_selector();
    auto request = orchestrate({PromptKind::StyleSelection, "I whispered conspiracy."},
                               "Shh, we should sneak through the room.", dict, bank, selector, 1);

    RequestJournal journal(tmp.file("journal.jsonl"));
    HttpSynthesisBackend backend("http://127.0.0.1:9", 0.2);  // port 9: nothing listens
    CHECK_THROWS_AS(dispatch(request, backend, journal), TransportError);
    CHECK(RequestJournal::replay(tmp.file("journal.jsonl")).size() == 1);
}

TEST_CASE("journal on an unwritable path fails loudly") {
    testsup::TempDir tmp;
    CHECK_THROWS_AS(RequestJournal(tmp.file("no-dir") / "journal.jsonl"), IoError);
}

TEST_CASE("http dispatch posts the wire payload and reads the job id") {
    httplib::Server server;
    std::string seen_body;
    server.Post("/synthesize", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        res.set_content(R"({"job_id":"j1"})", "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    testsup::TempDir tmp;
    auto dict = testsup::fixture_dictionary();
    auto bank = fixture_bank();
    auto selector = fixture_mock_selector();
    auto request = orchestrate({PromptKind::StyleSelection, "Bragging proudly about himself."},
                               "Mom, I got A+ in the final test!", dict, bank, selector, 7);

    RequestJournal journal(tmp.file("journal.jsonl"));
    HttpSynthesisBackend backend("http://127.0.0.1:" + std::to_string(port), 5.0);
    auto receipt = dispatch(request, backend, journal);
    CHECK(receipt.job_id == "j1");
    CHECK(seen_body == synthesis_wire_payload(request).dump());
    auto parsed = nlohmann::json::parse(seen_body);
    CHECK(parsed.at("text") == request.text);
    CHECK(parsed.at("reference_id") == "u004");
    CHECK(parsed.at("latent").size() == 8);

    server.stop();
    server_thread.join();
}

TEST_CASE("request record JSON round-trips") {
    SynthesisRequest request;
    request.text = "hello";
    request.reference_id = "u001";
    request.latent = {0.25, -0.5};
    request.duration_scale = 1.5;
    request.retrieval = {1, "The tone of a shrill voice and an urgent cry for help", "mock",
                         "{\"match\":\"exact\"}"};
    auto j = synthesis_request_to_json(request);
    CHECK(synthesis_request_from_json(j) == request);
    CHECK_THROWS_AS(synthesis_request_from_json(nlohmann::json::object()), ValidationError);
}
