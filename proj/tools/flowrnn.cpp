#include "flowrnn/cli.hpp"

int main(int argc, char** argv) { return flowrnn::run_cli(argc, argv); }
