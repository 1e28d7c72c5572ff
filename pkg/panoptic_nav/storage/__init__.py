# Sequence storage
