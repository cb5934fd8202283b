#include <gtest/gtest.h>

#include <fstream>

#include "sonograin/server.hpp"
#include "support.hpp"

using namespace sgtest;
using nlohmann::json;

namespace {

struct LiveServer {
  TempDir dir;
  MaterialRegistry registry;
  std::unique_ptr<SessionHub> hub;
  std::unique_ptr<Server> server;

  LiveServer() {
    static const Fixture f = noise_fixture(600, 5);
    registry.add("noise", f.material, write_photo());
    registry.add("plain", f.material);
    hub = std::make_unique<SessionHub>(registry, SynthParams{}, 4);
    server = std::make_unique<Server>(*hub, "127.0.0.1", 0);
    server->start(2);
  }

  fs::path write_photo() {
    std::ofstream(dir / "noise.png", std::ios::binary) << std::string("\x89PNG\r\n\x1a\nfake", 12);
    return dir / "noise.png";
  }
};

http::response<http::string_body> get(unsigned short port, const std::string& target) {
  net::io_context ioc;
  beast::tcp_stream stream(ioc);
  stream.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
  http::request<http::string_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "127.0.0.1");
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return res;
}

struct WsClient {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};
  beast::flat_buffer buffer;

  explicit WsClient(unsigned short port) {
    ws.next_layer().connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    ws.handshake("127.0.0.1", "/session");
  }

  void send(const std::string& text) {
    ws.text(true);
    ws.write(net::buffer(text));
  }

  // Reads the next message; returns true if it was binary.
  bool read(std::string& out) {
    buffer.consume(buffer.size());
    ws.read(buffer);
    out = beast::buffers_to_string(buffer.data());
    return ws.got_binary();
  }

  json next_text() {
    std::string msg;
    while (read(msg)) {
    }
    return json::parse(msg);
  }
};

}  // namespace

TEST(Server, ListsCorpora) {
  LiveServer live;
  const auto res = get(live.server->port(), "/corpora");
  EXPECT_EQ(res.result(), http::status::ok);
  EXPECT_EQ(res[http::field::content_type], "application/json");
  const json body = json::parse(res.body());
  ASSERT_EQ(body.size(), 2u);
  EXPECT_EQ(body[0]["id"], "noise");
  EXPECT_EQ(body[0]["image"], true);
  EXPECT_EQ(body[1]["id"], "plain");
  EXPECT_GT(body[0]["fragments"].get<int>(), 25);
  EXPECT_DOUBLE_EQ(body[0]["duration"].get<double>(), 6.0);
}

TEST(Server, ServesMaterialPhotos) {
  LiveServer live;
  const auto ok = get(live.server->port(), "/materials/noise/image");
  EXPECT_EQ(ok.result(), http::status::ok);
  EXPECT_EQ(ok[http::field::content_type], "image/png");
  EXPECT_EQ(ok.body(), std::string("\x89PNG\r\n\x1a\nfake", 12));
  EXPECT_EQ(get(live.server->port(), "/materials/plain/image").result(), http::status::not_found);
  EXPECT_EQ(get(live.server->port(), "/materials/granite/image").result(), http::status::not_found);
  EXPECT_EQ(get(live.server->port(), "/nothing").result(), http::status::not_found);
}

TEST(Server, SessionStreamsDenseFrames) {
  LiveServer live;
  WsClient client(live.server->port());
  client.send(R"({"type":"open","corpus":"noise","dpi":96,"seed":3})");
  const json opened = client.next_text();
  ASSERT_EQ(opened["type"], "opened");
  EXPECT_EQ(opened["format"], "f32le");

  std::string msg;
  std::uint32_t expected = 0;
  for (int i = 0; i < 30; ++i) {
    const double t = i / 60.0;
    client.send(json{{"type", "pointer"}, {"t", t}, {"x", 100 + 800 * t}, {"y", 200}}.dump());
  }
  bool audible = false;
  while (expected < 60) {
    ASSERT_TRUE(client.read(msg));
    ASSERT_EQ(msg.size(), kFrameBytes);
    const auto frame = decode_frame(std::span(reinterpret_cast<const unsigned char*>(msg.data()), msg.size()));
    EXPECT_EQ(frame.sequence, expected++);
    for (float s : frame.block[0]) audible |= s != 0.0f;
  }
  EXPECT_TRUE(audible);
  client.send(R"({"type":"close"})");
}

TEST(Server, ErrorRepliesOverTheChannel) {
  LiveServer live;
  WsClient client(live.server->port());
  client.send(R"({"type":"open","corpus":"granite"})");
  json reply = client.next_text();
  EXPECT_EQ(reply["type"], "error");
  EXPECT_EQ(reply["code"], "unknown_corpus");
  client.send(R"({"type":"pointer","t":0,"x":0,"y":0})");
  EXPECT_EQ(client.next_text()["code"], "not_open");
}
