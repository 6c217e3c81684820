/* Magic-byte guard: first byte must be 'G'. */
#include <stdio.h>

static char buf[4096];
static long len;

static void vulnerable_sink(void) {
    printf("GUARD: target reached\n"); /* [bb:target] */
}

int main(int argc, char** argv) {
    if (argc < 2) return 1; /* [bb:entry] */
    FILE* f = fopen(argv[1], "rb");
    if (!f) return 1;
    len = (long)fread(buf, 1, sizeof buf, f);
    fclose(f);
    if (len < 1 || buf[0] != 'G') { /* [bb:guard] */
        return 1; /* [bb:bail] */
    }
    vulnerable_sink(); /* [bb:call] */
    return 0; /* [bb:exit] */
}
