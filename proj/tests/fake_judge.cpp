// Scripted stand-in for an external judge, used by the client tests.
//   fake_judge MODE [--tcp PORTFILE]
// MODE: ok | silent | garbage | range | noscore | reverse
// With --tcp it listens on an ephemeral localhost port, writes the port
// number to PORTFILE and serves one connection; otherwise it uses stdio.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <json.hpp>

namespace {

std::string reply_for(const std::string& mode, const nlohmann::json& req) {
  const auto id = req.value("request_id", "");
  const bool suff = req.value("kind", "") == "sufficient";
  if (mode == "garbage") return "this is not json";
  if (mode == "noscore") return nlohmann::json({{"request_id", id}}).dump();
  double score = suff ? 1.0 : 0.75;
  if (mode == "range") score = suff ? 0.5 : 1.5;
  // a gold answer mentioned in the trajectory counts as sufficient
  if (mode == "ok" && suff) {
    score = req.value("trajectory", "").find(req.value("gold", "\x01")) != std::string::npos ? 1.0 : 0.0;
  }
  return nlohmann::json({{"request_id", id}, {"score", score}}).dump();
}

void serve(const std::string& mode, FILE* in, FILE* out) {
  std::vector<nlohmann::json> held;
  char* buf = nullptr;
  size_t cap = 0;
  ssize_t n;
  while ((n = getline(&buf, &cap, in)) > 0) {
    const auto req = nlohmann::json::parse(std::string(buf, static_cast<size_t>(n)), nullptr, false);
    if (mode == "silent") continue;
    if (mode == "reverse") {
      // answer pairs out of order to exercise id routing
      held.push_back(req);
      if (held.size() < 2) continue;
      for (auto it = held.rbegin(); it != held.rend(); ++it) std::fprintf(out, "%s\n", reply_for("ok", *it).c_str());
      held.clear();
      std::fflush(out);
      continue;
    }
    std::fprintf(out, "%s\n", reply_for(mode, req).c_str());
    std::fflush(out);
  }
  free(buf);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: fake_judge MODE [--tcp PORTFILE]\n";
    return 2;
  }
  const std::string mode = argv[1];
  if (argc == 4 && std::string(argv[2]) == "--tcp") {
    const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(srv, 1) != 0) return 1;
    socklen_t len = sizeof addr;
    ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
    {
      const std::string tmp = std::string(argv[3]) + ".tmp";
      FILE* pf = std::fopen(tmp.c_str(), "w");
      std::fprintf(pf, "%d\n", ntohs(addr.sin_port));
      std::fclose(pf);
      std::rename(tmp.c_str(), argv[3]);
    }
    const int fd = ::accept(srv, nullptr, nullptr);
    if (fd < 0) return 1;
    FILE* in = ::fdopen(fd, "r");
    FILE* out = ::fdopen(::dup(fd), "w");
    serve(mode, in, out);
    return 0;
  }
  serve(mode, stdin, stdout);
  return 0;
}
