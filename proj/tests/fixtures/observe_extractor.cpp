// Emits observations about its stdin: byte length and the two-byte magic.

#include <iostream>
#include <sstream>

int main() {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    const std::string data = buf.str();
    std::string magic = data.substr(0, 2);
    std::cout << "{\"len\": " << data.size() << ", \"magic\": \"" << magic << "\"}";
    return 0;
}
