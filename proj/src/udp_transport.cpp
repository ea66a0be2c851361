#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "tip/coap.hpp"
#include "tip/error.hpp"
#include "tip/transport.hpp"

namespace tip::net {

namespace {

constexpr const char* kMdnsGroup = "224.0.0.251";
constexpr std::uint16_t kMdnsPort = 5353;

std::string format_address(const sockaddr_in& sa) {
    char buf[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &sa.sin_addr, buf, sizeof buf);
    return "udp://" + std::string(buf) + ":" + std::to_string(ntohs(sa.sin_port));
}

sockaddr_in make_sockaddr(const std::string& host, std::uint16_t port) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    std::string h = host == "localhost" ? "127.0.0.1" : host;
    if (inet_pton(AF_INET, h.c_str(), &sa.sin_addr) != 1) throw Error(Errc::ConfigError, "bad IPv4 address: " + host);
    return sa;
}

}  // namespace

std::pair<std::string, std::uint16_t> parse_udp_address(const std::string& address) {
    constexpr std::string_view prefix = "udp://";
    if (address.rfind(prefix, 0) != 0) throw Error(Errc::ConfigError, "address must start with udp://: " + address);
    auto rest = address.substr(prefix.size());
    auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw Error(Errc::ConfigError, "address lacks a port: " + address);
    unsigned long port = 0;
    try {
        port = std::stoul(rest.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error(Errc::ConfigError, "bad port in " + address);
    }
    if (port > 0xFFFF) throw Error(Errc::ConfigError, "port out of range in " + address);
    return {rest.substr(0, colon), static_cast<std::uint16_t>(port)};
}

std::unique_ptr<UdpTransport> UdpTransport::bind(const std::string& host, std::uint16_t port, std::uint64_t seed) {
    std::unique_ptr<UdpTransport> t(new UdpTransport());
    t->rng_ = Rng(seed);
    t->fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (t->fd_ < 0) throw Error(Errc::BindFailure, std::string("socket: ") + std::strerror(errno));
    sockaddr_in sa;
    try {
        sa = make_sockaddr(host, port);
    } catch (const Error& e) {
        throw Error(Errc::BindFailure, e.what());
    }
    if (::bind(t->fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0)
        throw Error(Errc::BindFailure, "bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    socklen_t len = sizeof sa;
    ::getsockname(t->fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    t->port_ = ntohs(sa.sin_port);
    t->address_ = format_address(sa);
    return t;
}

UdpTransport::~UdpTransport() {
    if (fd_ >= 0) ::close(fd_);
    if (mcast_fd_ >= 0) ::close(mcast_fd_);
}

std::uint64_t UdpTransport::now_us() const {
    using namespace std::chrono;
    return static_cast<std::uint64_t>(duration_cast<microseconds>(system_clock::now().time_since_epoch()).count());
}

void UdpTransport::send_raw(int fd, const std::string& host, std::uint16_t port, ByteView bytes) {
    if (bytes.size() > kMaxUdpPayload)
        throw Error(Errc::OversizedDatagram,
                    "datagram of " + std::to_string(bytes.size()) + " bytes exceeds the UDP limit of 65507");
    auto sa = make_sockaddr(host, port);
    ::sendto(fd, bytes.data(), bytes.size(), 0, reinterpret_cast<const sockaddr*>(&sa), sizeof sa);
}

void UdpTransport::send(const std::string& to, ByteView datagram) {
    auto framed = coap::wrap(datagram, rng_);
    auto [host, port] = parse_udp_address(to);
    send_raw(fd_, host, port, framed);
    ++sent_;
}

void UdpTransport::multicast(const std::string& group, ByteView datagram) {
    if (!groups_.count(group)) return;
    auto framed = coap::wrap(datagram, rng_);
    for (const auto& peer : mcast_peers_) {
        if (peer == address_) continue;
        auto [host, port] = parse_udp_address(peer);
        send_raw(fd_, host, port, framed);
    }
    if (mcast_fd_ >= 0) send_raw(fd_, kMdnsGroup, kMdnsPort, framed);
    ++sent_;
}

bool UdpTransport::enable_os_multicast() {
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) return false;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
#ifdef SO_REUSEPORT
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEPORT, &one, sizeof one);
#endif
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(kMdnsPort);
    sa.sin_addr.s_addr = htonl(INADDR_ANY);
    ip_mreq mreq{};
    inet_pton(AF_INET, kMdnsGroup, &mreq.imr_multiaddr);
    mreq.imr_interface.s_addr = htonl(INADDR_ANY);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 ||
        ::setsockopt(fd, IPPROTO_IP, IP_ADD_MEMBERSHIP, &mreq, sizeof mreq) != 0) {
        ::close(fd);
        return false;
    }
    mcast_fd_ = fd;
    return true;
}

TimerId UdpTransport::schedule(std::uint64_t delay_us, std::function<void()> fn) {
    TimerId id = next_timer_++;
    timers_.emplace(id, std::make_pair(now_us() + delay_us, std::move(fn)));
    return id;
}

void UdpTransport::drain(int fd) {
    std::uint8_t buf[65536];
    for (;;) {
        sockaddr_in from{};
        socklen_t len = sizeof from;
        ssize_t n = ::recvfrom(fd, buf, sizeof buf, MSG_DONTWAIT, reinterpret_cast<sockaddr*>(&from), &len);
        if (n < 0) return;
        Bytes inner;
        try {
            inner = coap::unwrap(ByteView(buf, static_cast<std::size_t>(n)));
        } catch (const Error&) {
            ++dropped_;
            continue;
        }
        auto sender = format_address(from);
        if (sender == address_) continue;  // own multicast looped back
        if (receiver_) receiver_(sender, inner);
    }
}

void UdpTransport::poll(std::uint64_t timeout_us) {
    std::uint64_t now = now_us();
    std::uint64_t wait = timeout_us;
    for (const auto& [id, t] : timers_) wait = std::min(wait, t.first > now ? t.first - now : 0);
    pollfd fds[2] = {{fd_, POLLIN, 0}, {mcast_fd_, POLLIN, 0}};
    int nfds = mcast_fd_ >= 0 ? 2 : 1;
    int ms = static_cast<int>((wait + 999) / 1000);
    if (::poll(fds, static_cast<nfds_t>(nfds), ms) > 0) {
        if (fds[0].revents & POLLIN) drain(fd_);
        if (nfds == 2 && (fds[1].revents & POLLIN)) drain(mcast_fd_);
    }
    // Fire due timers in deadline order; callbacks may add or cancel timers.
    for (;;) {
        now = now_us();
        auto due = timers_.end();
        for (auto it = timers_.begin(); it != timers_.end(); ++it)
            if (it->second.first <= now && (due == timers_.end() || it->second.first < due->second.first)) due = it;
        if (due == timers_.end()) break;
        auto fn = std::move(due->second.second);
        timers_.erase(due);
        fn();
    }
}

bool UdpTransport::run_until(const std::function<bool()>& done, std::uint64_t timeout_us) {
    std::uint64_t deadline = now_us() + timeout_us;
    while (!done()) {
        std::uint64_t now = now_us();
        if (now >= deadline) return done();
        poll(std::min<std::uint64_t>(deadline - now, 10'000));
    }
    return true;
}

}  // namespace tip::net
