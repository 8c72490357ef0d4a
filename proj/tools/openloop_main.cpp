// SPDX-License-Identifier: Apache-2.0
#include <openloop/cli.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    return openloop::cli_main(argc, argv, { std::cin, std::cout, std::cerr, true });
}
