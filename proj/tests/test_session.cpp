// Copyright 2026 The Untwist Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "support.hpp"
#include "untwist/llm/mocks.hpp"
#include "untwist/media/ingest.hpp"
#include "untwist/session/server.hpp"
#include "untwist/session/service.hpp"
#include "untwist/session/store.hpp"

using namespace untwist;
using namespace untwist::session;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr Rgb kGray{90, 90, 90};

// data_dir/<id>/frames with `n` uniform gray 640x360 stills at 2 s spacing.
void make_video(const fs::path& data_dir, const std::string& id, int n) {
  const fs::path frames = data_dir / id / "frames";
  fs::create_directories(frames);
  for (int i = 0; i < n; ++i)
    write_png(media::DirectoryFrameSource::still_path(frames, static_cast<std::size_t>(i)),
              RgbImage(640, 360, Rgb{kGray.r, kGray.g, static_cast<std::uint8_t>(90 + i)}));
  media::write_frame_meta(frames, 2.0 * n, 0.5);
}

QueryPayload ask(std::string session, std::string video, double t, std::string message) {
  QueryPayload q;
  q.session_id = std::move(session);
  q.video_id = std::move(video);
  q.timestamp_s = t;
  q.message = std::move(message);
  return q;
}

QueryPayload ask_box(std::string session, std::string video, double t, std::string message,
                     annotate::BoundingBox box, Size2 display) {
  QueryPayload q = ask(std::move(session), std::move(video), t, std::move(message));
  box.space = annotate::Space::Display;
  q.box = box;
  q.display = display;
  return q;
}

ChatTurn sample_turn(std::uint64_t id) {
  ChatTurn t;
  t.turn_id = id;
  t.query = ask("s1", "v1", 1.5, "why \"this\"?\nline two");
  t.reply = "because";
  t.created_at = utc_now_rfc3339();
  if (id % 2) t.annotated_frame_ref = "s1/turn_000001.png";
  return t;
}

bool same_text_prefix(const std::vector<llm::ChatMessage>& prefix,
                      const std::vector<llm::ChatMessage>& full) {
  if (prefix.size() > full.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (prefix[i].role != full[i].role || prefix[i].text != full[i].text) return false;
  return true;
}

bool has_digit(const std::string& s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

struct Rig {
  untwist::testing::TempDir dir;
  VideoCatalog catalog{dir.path() / "data"};
  JsonlSessionStore store{dir.path() / "sessions"};
  llm::EchoChat echo;
  llm::RecordingChat recorder{echo};

  Rig() {
    make_video(dir.path() / "data", "v1", 5);
    make_video(dir.path() / "data", "v2", 3);
  }
  SessionService service(llm::ChatClient& chat, ServiceOptions opts = {}) {
    return SessionService(catalog, store, chat, dir.path() / "annotated", opts);
  }
};

}  // namespace

TEST_SUITE("session-protocol") {
  TEST_CASE("query frame parses and round-trips") {
    const std::string text = R"({"type":"query","session_id":"s-1","video_id":"lec_01","timestamp_s":12.5,
      "box":{"x":10,"y":20,"width":30,"height":40},"display":{"w":640,"h":360},"message":"what is this?"})";
    const QueryPayload q = parse_query_frame(text);
    CHECK(q.session_id == "s-1");
    CHECK(q.video_id == "lec_01");
    CHECK(q.timestamp_s == 12.5);
    REQUIRE(q.box);
    CHECK(q.box->width == 30);
    CHECK(q.box->space == annotate::Space::Display);
    CHECK(q.display == Size2{640, 360});
    CHECK(parse_query_frame(query_frame(q).dump()) == q);

    const QueryPayload plain = parse_query_frame(
        R"({"type":"query","session_id":"a","video_id":"b","timestamp_s":0,"box":null,"display":null,"message":"m"})");
    CHECK_FALSE(plain.box);
    CHECK(query_frame(plain)["box"].is_null());
  }

  TEST_CASE("malformed frames are rejected") {
    const char* bad[] = {
        "not json",
        "[1,2]",
        R"({"type":"reply","session_id":"a","video_id":"b","timestamp_s":0,"message":"m"})",
        R"({"type":"query","video_id":"b","timestamp_s":0,"message":"m"})",
        R"({"type":"query","session_id":"a","video_id":"b","timestamp_s":"0","message":"m"})",
        R"({"type":"query","session_id":"a","video_id":"b","timestamp_s":-1,"message":"m"})",
        R"({"type":"query","session_id":"a","video_id":"b","timestamp_s":0,"message":""})",
        R"({"type":"query","session_id":"../etc","video_id":"b","timestamp_s":0,"message":"m"})",
        R"({"type":"query","session_id":"a","video_id":"b","timestamp_s":0,"message":"m","box":{"x":1,"y":1,"width":2,"height":2}})",
        R"({"type":"query","session_id":"a","video_id":"b","timestamp_s":0,"message":"m","box":{"x":1,"y":1,"width":0,"height":2},"display":{"w":5,"h":5}})",
        R"({"type":"query","session_id":"a","video_id":"b","timestamp_s":0,"message":"m","display":{"w":0,"h":5}})",
    };
    for (const char* t : bad) {
      INFO(t);
      CHECK_THROWS_AS(parse_query_frame(t), ProtocolError);
    }
  }

  TEST_CASE("reply and error frames") {
    CHECK(reply_frame(3, "hi") == json{{"type", "reply"}, {"turn_id", 3}, {"text", "hi"}});
    CHECK(error_frame("unknown_video", "x")["code"] == "unknown_video");
    CHECK(std::string(kProtocolVersion) == "untwist/ws-v1");
  }

  TEST_CASE("safe ids") {
    CHECK(is_safe_id("abc-DEF_1.2"));
    CHECK_FALSE(is_safe_id(""));
    CHECK_FALSE(is_safe_id(".."));
    CHECK_FALSE(is_safe_id("a/b"));
    CHECK_FALSE(is_safe_id(std::string(129, 'a')));
  }
}

TEST_SUITE("session-store") {
  TEST_CASE("append and load round-trip") {
    untwist::testing::TempDir dir;
    JsonlSessionStore store(dir.path());
    CHECK(store.load_session("s1").turns.empty());
    store.append_turn("s1", sample_turn(1));
    store.append_turn("s1", sample_turn(2));
    const Session s = store.load_session("s1");
    REQUIRE(s.turns.size() == 2);
    CHECK(s.turns[0] == sample_turn(1));
    CHECK(s.turns[1].turn_id == 2);
    CHECK(s.video_id == "v1");
    CHECK(s.next_turn_id() == 3);
    CHECK(store.list_sessions() == std::vector<std::string>{"s1"});

    // a second store over the same directory sees the same history
    JsonlSessionStore reopened(dir.path());
    CHECK(reopened.load_session("s1") == s);
  }

  TEST_CASE("a truncated record is reported with its line number") {
    untwist::testing::TempDir dir;
    JsonlSessionStore store(dir.path());
    store.append_turn("s1", sample_turn(1));
    {
      std::ofstream out(store.file_for("s1"), std::ios::app);
      out << R"({"turn_id": 2, "query": {"sess)" << '\n';
    }
    try {
      store.load_session("s1");
      FAIL("expected StoreCorrupt");
    } catch (const StoreCorrupt& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("s1.jsonl:2") != std::string::npos);
    }
  }

  TEST_CASE("unsafe ids never reach the filesystem") {
    untwist::testing::TempDir dir;
    JsonlSessionStore store(dir.path());
    CHECK_THROWS_AS(store.append_turn("../evil", sample_turn(1)), std::invalid_argument);
  }

  TEST_CASE("timestamps are RFC 3339 UTC") {
    const std::string t = utc_now_rfc3339();
    CHECK(t.size() == 24);
    CHECK(t[10] == 'T');
    CHECK(t.back() == 'Z');
  }
}

TEST_SUITE("session-service") {
  TEST_CASE("nearest frame") {
    const std::vector<double> ts{0, 2, 4, 6};
    CHECK(nearest_frame_index(0, ts) == 0);
    CHECK(nearest_frame_index(0.9, ts) == 0);
    CHECK(nearest_frame_index(1.0, ts) == 0);
    CHECK(nearest_frame_index(1.01, ts) == 1);
    CHECK(nearest_frame_index(5.5, ts) == 3);
    CHECK(nearest_frame_index(100, ts) == 3);
    CHECK_THROWS_AS(nearest_frame_index(1, std::vector<double>{}), std::invalid_argument);
  }

  TEST_CASE("catalog lists ingested videos") {
    Rig rig;
    CHECK(rig.catalog.list() == std::vector<std::string>{"v1", "v2"});
    CHECK(rig.catalog.open("nope") == nullptr);
    CHECK(rig.catalog.open("../v1") == nullptr);
    const auto v = rig.catalog.open("v1");
    REQUIRE(v);
    CHECK(v->duration_s() == 10.0);
    CHECK(v->timestamps() == std::vector<double>{0, 2, 4, 6, 8});
    CHECK_FALSE(v->deep_description());
  }

  TEST_CASE("a query without a box sends the nearest clean frame") {
    Rig rig;
    auto service = rig.service(rig.recorder);
    const QueryResult r = service.handle_query(ask("s1", "v1", 4.9, "what is this"));
    CHECK(r.turn_id == 1);
    CHECK(r.reply == "what is this");
    CHECK_FALSE(r.annotated_frame_ref);
    const auto calls = rig.recorder.calls();
    REQUIRE(calls.size() == 1);
    const auto& msgs = calls[0];
    CHECK(msgs.front().role == llm::Role::System);
    REQUIRE(msgs.back().images.size() == 1);
    const RgbImage sent = decode_png(msgs.back().images[0].png);
    CHECK(sent == rig.catalog.open("v1")->load_frame(2).pixels);
  }

  TEST_CASE("a query with a box sends an annotated frame and stores it") {
    Rig rig;
    auto service = rig.service(rig.recorder);
    const QueryResult r =
        service.handle_query(ask_box("s1", "v1", 2.0, "explain", {10, 10, 50, 40}, {320, 180}));
    REQUIRE(r.annotated_frame_ref);
    const RgbImage stored = read_png(rig.dir / "annotated" / *r.annotated_frame_ref);
    const RgbImage sent = decode_png(rig.recorder.calls()[0].back().images[0].png);
    CHECK(stored == sent);
    // display box (10,10,50,40) at half scale maps to frame pixels (20,20)-(120,100)
    CHECK(sent.at(20, 20) == annotate::kRed);
    CHECK(sent.at(119, 99) == annotate::kRed);
    CHECK(sent.at(70, 20) == annotate::kRed);
    CHECK_FALSE(sent.at(19, 19) == annotate::kRed);
    CHECK_FALSE(sent.at(120, 100) == annotate::kRed);
    CHECK_FALSE(sent.at(70, 60) == annotate::kRed);
    const std::string text = rig.recorder.calls()[0].back().text;
    CHECK(text.find("explain") == 0);
    CHECK(text.find("box") != std::string::npos);

    const Session s = rig.store.load_session("s1");
    REQUIRE(s.turns.size() == 1);
    CHECK(s.turns[0].annotated_frame_ref == r.annotated_frame_ref);
    CHECK(s.turns[0].query.box->width == 50);
  }

  TEST_CASE("sequential queries extend the context monotonically") {
    Rig rig;
    auto service = rig.service(rig.recorder);
    service.handle_query(ask("s1", "v1", 0, "first question"));
    service.handle_query(ask_box("s1", "v1", 6, "second question", {0, 0, 100, 100}, {640, 360}));
    const QueryResult third = service.handle_query(ask("s1", "v1", 8, "third question"));
    CHECK(third.turn_id == 3);
    const auto calls = rig.recorder.calls();
    REQUIRE(calls.size() == 3);
    for (std::size_t i = 0; i + 1 < calls.size(); ++i) {
      auto prior = calls[i];
      prior.push_back(llm::ChatMessage::assistant(i == 0 ? std::string("first question")
                                                         : user_turn_text(ask_box("s1", "v1", 6, "second question", {0, 0, 100, 100}, {640, 360}))));
      CHECK(same_text_prefix(prior, calls[i + 1]));
    }
    // only the newest user message carries an image
    for (std::size_t m = 0; m + 1 < calls[2].size(); ++m) CHECK(calls[2][m].images.empty());
  }

  TEST_CASE("outgoing text carries no coordinates") {
    Rig rig;
    auto service = rig.service(rig.recorder);
    service.handle_query(ask_box("s1", "v1", 2, "what is inside", {17, 23, 91, 47}, {333, 187}));
    service.handle_query(ask_box("s1", "v1", 4, "and here", {101, 5, 63, 29}, {333, 187}));
    for (const auto& call : rig.recorder.calls())
      for (const auto& m : call) CHECK_FALSE(has_digit(m.text));
  }

  TEST_CASE("request errors") {
    Rig rig;
    auto service = rig.service(rig.echo);
    auto code_of = [&](const QueryPayload& q) {
      try {
        service.handle_query(q);
      } catch (const SessionError& e) {
        return e.code();
      }
      FAIL("expected SessionError");
      return SessionErrc::BadRequest;
    };
    CHECK(code_of(ask("s1", "missing", 0, "q")) == SessionErrc::UnknownVideo);
    CHECK(code_of(ask("s1", "v1", 10.5, "q")) == SessionErrc::TimestampOutOfRange);
    CHECK(code_of(ask("s1", "v1", 0, "")) == SessionErrc::BadRequest);
    CHECK(code_of(ask_box("s1", "v1", 0, "q", {400, 10, 20, 20}, {320, 180})) ==
          SessionErrc::DegenerateBox);
    service.handle_query(ask("s1", "v1", 10.0, "end"));  // the final instant is in range
    CHECK(code_of(ask("s1", "v2", 0, "q")) == SessionErrc::VideoMismatch);
    CHECK(rig.store.load_session("s1").turns.size() == 1);
  }

  TEST_CASE("gateway failures are persisted with an error marker and skipped later") {
    Rig rig;
    llm::ScriptedChat scripted({std::string("one"),
                                llm::GatewayError(llm::GatewayErrc::RateLimited, "slow down", 429),
                                std::string("three")});
    llm::RecordingChat recorder(scripted);
    auto service = rig.service(recorder);
    service.handle_query(ask("s1", "v1", 0, "alpha"));
    try {
      service.handle_query(ask("s1", "v1", 0, "beta"));
      FAIL("expected GatewayFailure");
    } catch (const SessionError& e) {
      CHECK(e.code() == SessionErrc::GatewayFailure);
      CHECK(e.turn_id() == 2);
    }
    const auto r = service.handle_query(ask("s1", "v1", 0, "gamma"));
    CHECK(r.turn_id == 3);
    const Session s = rig.store.load_session("s1");
    REQUIRE(s.turns.size() == 3);
    CHECK(s.turns[1].error);
    CHECK(s.turns[1].error->find("rate_limited") != std::string::npos);
    const auto last = recorder.calls().back();
    for (const auto& m : last) CHECK(m.text.find("beta") == std::string::npos);
  }

  TEST_CASE("old turns collapse into one marker beyond the history budget") {
    Rig rig;
    ServiceOptions opts;
    opts.history_turns = 2;
    auto service = rig.service(rig.recorder, opts);
    for (const char* q : {"qa", "qb", "qc", "qd"}) service.handle_query(ask("s1", "v1", 0, q));
    const auto last = rig.recorder.calls().back();
    // system, marker, 2 x (user, assistant), new user
    REQUIRE(last.size() == 7);
    CHECK(last[1].role == llm::Role::System);
    CHECK(last[1].text.find("omitted") != std::string::npos);
    CHECK(last[2].text == "qb");
    CHECK(last[4].text == "qc");
    CHECK(last[6].text == "qd");
  }

  TEST_CASE("deep description narrative enters the system prompt") {
    describe::DeepDescription dd;
    dd.narrative = "The lecture derives the quadratic formula.";
    const auto msgs = build_context(&dd, {}, ask("s", "v", 0, "q"), {}, 12);
    REQUIRE(msgs.size() == 2);
    CHECK(msgs[0].text.find(dd.narrative) != std::string::npos);
    CHECK(msgs[1].images.empty());
  }

  TEST_CASE("ticket lock admits waiters in arrival order") {
    TicketLock lock;
    std::vector<int> order;
    std::mutex order_mu;
    lock.lock();
    std::vector<std::thread> threads;
    for (int i = 0; i < 4; ++i) {
      threads.emplace_back([&, i] {
        lock.lock();
        {
          std::lock_guard g(order_mu);
          order.push_back(i);
        }
        lock.unlock();
      });
      std::this_thread::sleep_for(std::chrono::milliseconds(30));
    }
    lock.unlock();
    for (auto& t : threads) t.join();
    CHECK(order == std::vector<int>{0, 1, 2, 3});
  }

  TEST_CASE("concurrent queries on one session get distinct consecutive turn ids") {
    Rig rig;
    auto service = rig.service(rig.echo);
    std::vector<std::uint64_t> ids(6);
    {
      std::vector<std::jthread> threads;
      for (int i = 0; i < 6; ++i)
        threads.emplace_back([&, i] { ids[i] = service.handle_query(ask("s1", "v1", 0, "q")).turn_id; });
    }
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6});
    CHECK(rig.store.load_session("s1").turns.size() == 6);
  }
}

TEST_SUITE("session-http") {
  TEST_CASE("routes") {
    Rig rig;
    rig.store.append_turn("s1", sample_turn(1));
    const HttpReply videos = route_http("/videos", rig.catalog, rig.store);
    CHECK(videos.status == 200);
    const json list = json::parse(videos.body);
    REQUIRE(list.size() == 2);
    CHECK(list[0]["id"] == "v1");
    CHECK(list[0]["frame_count"] == 5);
    CHECK(list[0]["deep_description"] == false);

    const HttpReply frame = route_http("/videos/v1/frames/3.png", rig.catalog, rig.store);
    CHECK(frame.status == 200);
    CHECK(frame.content_type == "image/png");
    const auto bytes = std::vector<std::uint8_t>(frame.body.begin(), frame.body.end());
    CHECK(decode_png(bytes) == rig.catalog.open("v1")->load_frame(3).pixels);

    CHECK(route_http("/videos/v1/frames/5.png", rig.catalog, rig.store).status == 404);
    CHECK(route_http("/videos/zz/frames/0.png", rig.catalog, rig.store).status == 404);
    CHECK(route_http("/nothing", rig.catalog, rig.store).status == 404);

    const json session = json::parse(route_http("/sessions/s1?x=1", rig.catalog, rig.store).body);
    CHECK(session["turns"].size() == 1);
    CHECK(json::parse(route_http("/sessions/unknown", rig.catalog, rig.store).body)["turns"].empty());
  }

  TEST_CASE("websocket text handling") {
    Rig rig;
    auto service = rig.service(rig.echo);
    const json bad = json::parse(handle_ws_text("{", service));
    CHECK(bad["type"] == "error");
    CHECK(bad["code"] == "bad_request");
    const json missing = json::parse(handle_ws_text(query_frame(ask("s1", "zz", 0, "q")).dump(), service));
    CHECK(missing["code"] == "unknown_video");
    const json ok = json::parse(handle_ws_text(query_frame(ask("s1", "v1", 0, "hello")).dump(), service));
    CHECK(ok["type"] == "reply");
    CHECK(ok["turn_id"] == 1);
    CHECK(ok["text"] == "hello");
  }
}
