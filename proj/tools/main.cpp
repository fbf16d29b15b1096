#include "fsuda/cli.hpp"
#include "fsuda/runtime.hpp"

int main(int argc, char** argv) {
    fsuda::tune_allocator();
    return fsuda::run_cli(argc, argv);
}
