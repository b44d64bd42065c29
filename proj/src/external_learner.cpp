#include <sys/types.h>
#include <sys/wait.h>
#include <signal.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "farm/error.hpp"
#include "farm/learners.hpp"
#include "farm/matrix_io.hpp"

namespace farm {

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        for (int attempt = 0; attempt < 16; ++attempt) {
            path = fs::temp_directory_path() / fmt::format("farm-ext-{:016x}", (std::uint64_t{rd()} << 32) | rd());
            if (fs::create_directory(path)) return;
        }
        throw DataError("cannot create a temporary directory for the external learner");
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

void replace_all(std::string& s, const std::string& token, const std::string& value) {
    for (auto pos = s.find(token); pos != std::string::npos; pos = s.find(token, pos + value.size())) {
        s.replace(pos, token.size(), value);
    }
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

VectorXd run_external_learner(const ExternalSpec& spec, const MatrixXd& train_x, const VectorXd& train_y,
                              const MatrixXd& test_x) {
    TempDir dir;
    const fs::path tx = dir.path / "train_x.bin", ty = dir.path / "train_y.bin", sx = dir.path / "test_x.bin",
                   out = dir.path / "pred.bin";
    save_bin(Matrix{train_x, {}}, tx);
    save_bin(Matrix{MatrixXd(train_y), {}}, ty);
    save_bin(Matrix{test_x, {}}, sx);
    std::string cmd = spec.command;
    replace_all(cmd, "{train_x}", quoted(tx));
    replace_all(cmd, "{train_y}", quoted(ty));
    replace_all(cmd, "{test_x}", quoted(sx));
    replace_all(cmd, "{out}", quoted(out));

    const pid_t pid = fork();
    if (pid < 0) throw DataError("fork failed for the external learner");
    if (pid == 0) {
        setpgid(0, 0);
        execl("/bin/sh", "sh", "-c", cmd.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(spec.timeout_seconds);
    int status = 0;
    for (;;) {
        const pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw DataError("waitpid failed for the external learner");
        if (std::chrono::steady_clock::now() > deadline) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw DataError(fmt::format("external learner timed out after {} s", spec.timeout_seconds));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw DataError(fmt::format("external learner exited with status {}",
                                    WIFEXITED(status) ? WEXITSTATUS(status) : -1));
    }
    if (!fs::exists(out)) throw DataError("external learner did not write a predictions file");
    const Matrix pred = load_bin(out);
    if (pred.cols() != 1) throw DataError("external predictions must have exactly one column");
    return pred.values.col(0);
}

}  // namespace farm
