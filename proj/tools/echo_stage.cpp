// External stage that returns every data message it receives unchanged.

#include <unistd.h>

#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "dub/error.hpp"
#include "dub/protocol.hpp"

using namespace dub;

namespace {

std::vector<ContentType> parse_types(const std::string& csv) {
  std::vector<ContentType> out;
  std::istringstream in(csv);
  for (std::string t; std::getline(in, t, ',');)
    if (!t.empty()) out.push_back(parse_content_type(t));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"echo stage for the line protocol"};
  std::string name = "echo", types = "text", accepts, produces;
  int exit_status = 0;
  int hang_after = -1;
  app.add_option("--name", name);
  app.add_option("--types", types, "content types accepted and produced");
  app.add_option("--accepts", accepts, "overrides --types for input");
  app.add_option("--produces", produces, "overrides --types for output");
  app.add_option("--exit-status", exit_status, "status to exit with after end");
  app.add_option("--hang-after", hang_after, "stop responding after this many messages");
  CLI11_PARSE(app, argc, argv);

  protocol::Hello hello;
  hello.name = name;
  try {
    hello.accepts = parse_types(accepts.empty() ? types : accepts);
    hello.produces = parse_types(produces.empty() ? types : produces);
  } catch (const Error& e) {
    std::cerr << "echo_stage: " << e.what() << "\n";
    return 2;
  }
  std::cout << protocol::format_hello(hello) << "\n" << std::flush;

  std::uint64_t seq = 0;
  int seen = 0;
  for (std::string line; std::getline(std::cin, line);) {
    if (line.empty()) continue;
    if (hang_after >= 0 && seen >= hang_after) {
      for (;;) std::this_thread::sleep_for(std::chrono::hours(1));
    }
    ++seen;
    protocol::WireMessage in;
    try {
      in = protocol::decode_message(line);
    } catch (const Error& e) {
      StageMessage err;
      err.seq = seq++;
      err.kind = MessageKind::kError;
      err.error = e.what();
      std::cout << protocol::encode_message(err) << "\n" << std::flush;
      return 1;
    }
    if (in.message.kind != MessageKind::kData) continue;
    StageMessage out = in.message;
    out.seq = seq++;
    out.stream_id.clear();
    std::cout << protocol::encode_message(out) << "\n" << std::flush;
  }
  StageMessage end;
  end.seq = seq;
  end.kind = MessageKind::kEnd;
  std::cout << protocol::encode_message(end) << "\n" << std::flush;
  return exit_status;
}
