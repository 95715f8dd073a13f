# Estimation services
