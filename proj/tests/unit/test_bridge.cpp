#include <doctest.h>

#include "support.hpp"
#include "tagforge/bridge.hpp"
#include "tagforge/taggers.hpp"

using namespace tagforge;

namespace {

std::vector<std::string> fake_bridge(std::vector<std::string> extra = {}) {
  std::vector<std::string> argv{TAGFORGE_PYTHON, test::fixture("bridge/fake_bridge.py").string(), "--lexicon",
                                test::fixture("bridge/ner_lexicon.json").string()};
  argv.insert(argv.end(), extra.begin(), extra.end());
  return argv;
}

std::unique_ptr<BridgeChannel> spawn(std::vector<std::string> extra = {}) {
  return std::make_unique<ProcessBridge>(fake_bridge(std::move(extra)));
}

Chunk make_chunk(const std::string& text) { return Chunk{"d", 0, 0, text.size(), text, content_hash(text), false}; }

const CategorySet& cats() {
  static const CategorySet set = load_categories(test::fixture("categories.json"));
  return set;
}

std::unique_ptr<BridgeChannel> loopback_greeting(const std::string& greeting) {
  return std::make_unique<LoopbackBridge>(std::vector<std::string>{greeting},
                                          [](const std::string&) { return std::vector<std::string>{}; });
}

}  // namespace

TEST_CASE("handshake exposes the bridge labels") {
  BridgeClient client(spawn());
  CHECK(client.labels() == standard_ner_labels());
  auto ents = client.annotate("Marta Kowalski moved to Dresden.", cats());
  CHECK(ents == std::vector<BridgeEntity>{{"PERSON", 0, 14}, {"GPE", 24, 31}});
  CHECK(client.requests() == 1);
}

TEST_CASE("offsets are bytes for multibyte text") {
  BridgeClient client(spawn());
  const std::string t = "東京 trip: Jürgen Müller met Tomás at Café Müller.";
  auto ents = client.annotate(t, cats());
  REQUIRE(ents.size() == 3);
  for (const auto& e : ents) {
    CHECK(is_char_boundary(t, e.start));
    CHECK(is_char_boundary(t, e.end));
  }
  CHECK(t.substr(ents[0].start, ents[0].end - ents[0].start) == "Jürgen Müller");
  CHECK(t.substr(ents[1].start, ents[1].end - ents[1].start) == "Tomás");
  CHECK(t.substr(ents[2].start, ents[2].end - ents[2].start) == "Café Müller");
}

TEST_CASE("handshake failures") {
  CHECK_ERROR_CODE(BridgeClient(spawn({"--protocol", "other"})), ErrorCode::kProtocolError);
  CHECK_ERROR_CODE(BridgeClient(spawn({"--version", "2"})), ErrorCode::kProtocolError);
  CHECK_ERROR_CODE(BridgeClient(loopback_greeting("hello")), ErrorCode::kProtocolError);
  CHECK_ERROR_CODE(BridgeClient(loopback_greeting(R"({"protocol":"tagforge-bridge","version":1})")),
                   ErrorCode::kProtocolError);
  CHECK_ERROR_CODE(BridgeClient(loopback_greeting(R"({"protocol":"tagforge-bridge","version":1,"labels":[1]})")),
                   ErrorCode::kProtocolError);
  auto silent = std::make_unique<ProcessBridge>(std::vector<std::string>{TAGFORGE_PYTHON, "-c", "pass"});
  CHECK_ERROR_CODE(BridgeClient(std::move(silent)), ErrorCode::kBridgeUnavailable);
  CHECK_ERROR_CODE(ProcessBridge({"/nonexistent/bridge-binary"}), ErrorCode::kBridgeUnavailable);
  CHECK_ERROR_CODE(ProcessBridge({}), ErrorCode::kInvalidArgument);
}

TEST_CASE("a reply with the wrong id is a protocol error") {
  BridgeClient client(spawn({"--wrong-id"}));
  try {
    client.annotate("Berlin", cats());
    FAIL("expected ProtocolError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kProtocolError);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("a bridge that dies mid-session is unavailable") {
  BridgeClient client(spawn({"--exit-after", "1"}));
  CHECK(client.annotate("Vienna", cats()).size() == 1);
  CHECK_ERROR_CODE(client.annotate("Vienna", cats()), ErrorCode::kBridgeUnavailable);
}

TEST_CASE("the bridge answers a malformed line with an error object and keeps serving") {
  ProcessBridge proc(fake_bridge());
  auto greeting = proc.read_line();
  REQUIRE(greeting);
  proc.write_line("not json");
  auto err = Json::parse(*proc.read_line());
  CHECK(err.at("id").is_null());
  CHECK(err.contains("error"));
  proc.write_line(R"({"id":"q","text":"Hamburg","categories":[]})");
  auto ok = Json::parse(*proc.read_line());
  CHECK(ok.at("id") == "q");
  CHECK(ok.at("entities").size() == 1);
  CHECK(proc.close() == 0);
}

TEST_CASE("an error reply surfaces as a protocol error") {
  Json greeting{{"protocol", "tagforge-bridge"}, {"version", 1}, {"labels", Json::array({"PERSON"})}};
  BridgeClient client(std::make_unique<LoopbackBridge>(
      std::vector<std::string>{greeting.dump()},
      [](const std::string&) { return std::vector<std::string>{R"({"id":null,"error":"boom"})"}; }));
  CHECK_ERROR_CODE(client.annotate("x", cats()), ErrorCode::kProtocolError);
}

TEST_CASE("code point offsets from a buggy bridge are dropped, never misapplied") {
  const std::string t = "Café Müller hired Akira Tanaka.";
  auto map = EntityLabelMap::load(test::fixture("label_map.json"));
  auto cfg = ExternalTagger::make_config(cats(), map, "fake");

  BridgeClient good(spawn());
  auto right = tag_external({make_chunk(t)}, cfg, map, good);
  REQUIRE(right[0].spans.size() == 2);
  CHECK(t.substr(right[0].spans[1].start, right[0].spans[1].end - right[0].spans[1].start) == "Akira Tanaka");

  BridgeClient buggy(spawn({"--char-offsets"}));
  ExternalTagStats stats;
  auto wrong = tag_external({make_chunk(t)}, cfg, map, buggy, &stats);
  CHECK(spans_well_formed(t, wrong[0].spans));
  for (const auto& s : wrong[0].spans) CHECK(is_char_boundary(t, s.start));
}

TEST_CASE("external tagger end to end through the process bridge") {
  auto map = EntityLabelMap::load(test::fixture("label_map.json"));
  auto bridge = std::make_shared<BridgeClient>(spawn());
  ExternalTagger tagger(ExternalTagger::make_config(cats(), map, "fake"), map, bridge);
  auto out = tagger.tag({make_chunk("Lena Fischer walked along the Elbe on Friday."), make_chunk("Nothing.")});
  CHECK(out[0].spans == std::vector<TagSpan>{{"Person", 0, 12}, {"Landmark", 30, 34}});
  CHECK(out[1].spans.empty());
  CHECK(tagger.stats().invocations == 2);
  CHECK(bridge->requests() == 2);
}

TEST_CASE("an extra label missing from the map raises MappingMissing") {
  EntityLabelMap map({{"PERSON", std::string("Person")}, {"GPE", std::string("City")}});
  auto cfg = ExternalTagger::make_config(cats(), map, "fake");
  BridgeClient client(spawn({"--extra-label", "WIDGET"}));
  CHECK_ERROR_CODE(tag_external({make_chunk("Hamburg is the port")}, cfg, map, client), ErrorCode::kMappingMissing);
}
