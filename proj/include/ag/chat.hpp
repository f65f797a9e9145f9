#pragma once

#include <string>
#include <vector>

#include "ag/image.hpp"

namespace ag {

/// One chat turn. Images are attached after the text, in order.
struct ChatMessage {
  std::string role;  // "system" | "user"
  std::string text;
  std::vector<Image8> images;
};

/// Minimal chat-completion client; HTTP and scripted implementations live in
/// backends. Implementations must be safe to call from multiple threads.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

}  // namespace ag
