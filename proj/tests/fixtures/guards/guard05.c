/* Checksum guard: byte sum must be divisible by 7. */
#include <stdio.h>

static unsigned char buf[4096];
static long len;
static long sum;

static void vulnerable_sink(void) {
    printf("GUARD: target reached\n"); /* [bb:target] */
}

int main(int argc, char** argv) {
    if (argc < 2) return 1; /* [bb:entry] */
    FILE* f = fopen(argv[1], "rb");
    if (!f) return 1;
    len = (long)fread(buf, 1, sizeof buf, f);
    fclose(f);
    for (long i = 0; i < len; i++) sum += buf[i];
    if (len == 0 || sum % 7 != 0) { /* [bb:guard] */
        return 1; /* [bb:bail] */
    }
    vulnerable_sink(); /* [bb:call] */
    return 0; /* [bb:exit] */
}
