from .imageio import ImageFormatError, read_ppm, write_pgm, write_ppm, to_grayscale_u8
