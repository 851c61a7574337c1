#pragma once
// Thin POSIX TCP layer for the collector's listening endpoint and the
// realtime node clients. One long-lived bidirectional connection per
// node; one line, one message.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qrmedge/protocol.hpp"
#include "qrmedge/qrm.hpp"

namespace qrmedge {

struct NetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class TcpStream {
  public:
    TcpStream() = default;
    explicit TcpStream(int fd) : fd_(fd) {}
    TcpStream(TcpStream&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
    TcpStream& operator=(TcpStream&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = other.fd_;
            other.fd_ = -1;
        }
        return *this;
    }
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;
    ~TcpStream() { close(); }

    bool valid() const { return fd_ >= 0; }

    void write_line(std::string_view line) {
        std::size_t sent = 0;
        while (sent < line.size()) {
            const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw NetError(std::string("send: ") + std::strerror(errno));
            }
            sent += static_cast<std::size_t>(n);
        }
    }

    // Blocking read of whatever is available; returns false on EOF.
    bool read_some(std::string& out) {
        char buf[4096];
        for (;;) {
            const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw NetError(std::string("recv: ") + std::strerror(errno));
            }
            if (n == 0) return false;
            out.append(buf, static_cast<std::size_t>(n));
            return true;
        }
    }

    // Non-blocking poll-and-read; returns false on EOF, true otherwise
    // (with or without new bytes).
    bool read_available(std::string& out, int timeout_ms = 0) {
        pollfd pfd{fd_, POLLIN, 0};
        const int r = ::poll(&pfd, 1, timeout_ms);
        if (r <= 0) return true;
        if (pfd.revents & (POLLIN | POLLHUP)) {
            char buf[4096];
            const ssize_t n = ::recv(fd_, buf, sizeof buf, MSG_DONTWAIT);
            if (n == 0) return false;
            if (n > 0) out.append(buf, static_cast<std::size_t>(n));
        }
        return true;
    }

    void shutdown() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    int fd() const { return fd_; }

  private:
    int fd_ = -1;
};

class TcpListener {
  public:
    // port 0 binds an ephemeral port; port() reports the bound one.
    static TcpListener listen_on(std::uint16_t port) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
        const int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            const int e = errno;
            ::close(fd);
            throw NetError("bind port " + std::to_string(port) + ": " + std::strerror(e));
        }
        if (::listen(fd, 16) != 0) {
            const int e = errno;
            ::close(fd);
            throw NetError(std::string("listen: ") + std::strerror(e));
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        return TcpListener(fd, ntohs(addr.sin_port));
    }

    TcpListener(TcpListener&& other) noexcept : fd_(other.fd_), port_(other.port_) {
        other.fd_ = -1;
    }
    TcpListener(const TcpListener&) = delete;
    ~TcpListener() { close(); }

    std::optional<TcpStream> accept() {
        const int fd = ::accept(fd_, nullptr, nullptr);
        if (fd < 0) return std::nullopt;
        const int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        return TcpStream(fd);
    }

    void close() {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

    std::uint16_t port() const { return port_; }

  private:
    TcpListener(int fd, std::uint16_t port) : fd_(fd), port_(port) {}
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

inline TcpStream connect_loopback(std::uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        const int e = errno;
        ::close(fd);
        throw NetError("connect port " + std::to_string(port) + ": " + std::strerror(e));
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return TcpStream(fd);
}

// Serves the collector over TCP: accept loop plus one reader thread per
// connection. All collector access is serialized behind one mutex, which
// also serializes the monitoring log append stream.
class CollectorServer {
  public:
    CollectorServer(Collector& collector, std::uint16_t port)
        : collector_(collector), listener_(TcpListener::listen_on(port)) {}

    ~CollectorServer() { stop(); }

    void start() {
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    void stop() {
        if (stopping_.exchange(true)) return;
        listener_.close();
        {
            std::lock_guard lock(conn_mutex_);
            for (auto& c : connections_) c->stream.shutdown();
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        for (auto& t : conn_threads_)
            if (t.joinable()) t.join();
    }

    std::uint16_t port() const { return listener_.port(); }

    // Serialized read of node completion, for shutdown coordination.
    bool wait_nodes_done(const std::vector<std::string>& node_ids,
                         std::chrono::milliseconds timeout) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            {
                std::lock_guard lock(collector_mutex_);
                bool all = true;
                for (const auto& id : node_ids) all = all && collector_.node_done(id);
                if (all) return true;
            }
            if (std::chrono::steady_clock::now() >= deadline) return false;
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
    }

  private:
    struct Connection {
        TcpStream stream;
        explicit Connection(TcpStream s) : stream(std::move(s)) {}
    };

    void accept_loop() {
        while (!stopping_) {
            auto stream = listener_.accept();
            if (!stream) break;
            auto conn = std::make_shared<Connection>(std::move(*stream));
            {
                std::lock_guard lock(conn_mutex_);
                connections_.push_back(conn);
                conn_threads_.emplace_back([this, conn] { serve(conn); });
            }
        }
    }

    void serve(const std::shared_ptr<Connection>& conn) {
        LineSplitter splitter;
        std::string chunk;
        for (;;) {
            chunk.clear();
            bool open = false;
            try {
                open = conn->stream.read_some(chunk);
            } catch (const NetError&) {
                break;
            }
            if (!open) break;
            splitter.feed(chunk);
            while (auto frame = splitter.next()) {
                std::lock_guard lock(collector_mutex_);
                if (frame->oversized) {
                    collector_.handle_framing_error(frame->line);
                    continue;
                }
                for (const auto& response : collector_.handle_line(frame->line)) {
                    try {
                        conn->stream.write_line(response);
                    } catch (const NetError&) {
                        return;
                    }
                }
            }
        }
    }

    Collector& collector_;
    TcpListener listener_;
    std::thread accept_thread_;
    std::mutex collector_mutex_;
    std::mutex conn_mutex_;
    std::vector<std::shared_ptr<Connection>> connections_;
    std::vector<std::thread> conn_threads_;
    std::atomic<bool> stopping_{false};
};

}  // namespace qrmedge
