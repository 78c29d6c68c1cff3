class ContractViolationException(ValueError):
    """
    Raised when an operation's precondition on shapes, channels or parameters does not hold
    """

    pass


class WeightFileException(ValueError):
    """
    Raised when a weight file cannot be decoded or does not match the model it is loaded into
    """

    pass


class ImageFormatException(ValueError):
    """
    Raised when an image file is not a readable 8-bit portable pixmap / graymap
    """

    pass
