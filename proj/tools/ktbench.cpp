#include "ktbench/runner.hpp"

int main(int argc, char** argv) { return ktbench::run_cli(argc, argv); }
