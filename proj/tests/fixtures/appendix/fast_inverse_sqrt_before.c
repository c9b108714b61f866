float fast_inverse_sqrt(float number) {
    float result;
    return result;
}
